//! Fixtures shared by the benchmarks.

use levelcap::harness::{tent, Sample};
use levelcap::{Condenser, Field, GridDomain, Mask};

/// `[-2, 2]` split into `cells` cells.
pub fn line(cells: usize) -> GridDomain {
    GridDomain::interval(-2.0, 2.0, cells).expect("valid interval")
}

/// `[-2, 2]²` with `n × n` cells.
pub fn square(n: usize) -> GridDomain {
    GridDomain::rectangle([-2.0, -2.0], [2.0, 2.0], [n, n]).expect("valid rectangle")
}

/// `([-0.5, 0.5], (-1, 1))` on a line grid.
pub fn interval_condenser(cells: usize) -> Condenser {
    let d = line(cells);
    Condenser::new(
        Mask::from_predicate(&d, |x| x[0].abs() <= 0.5),
        Mask::open_interval(&d, -1.0, 1.0),
    )
    .expect("nested")
}

/// `({r ≤ 0.5}, {r < 1.5})` on a square grid.
pub fn annulus_condenser(n: usize) -> Condenser {
    let d = square(n);
    let a = Mask::from_predicate(&d, |x| x[0].hypot(x[1]) <= 0.5);
    let b = Mask::from_predicate(&d, |x| x[0].hypot(x[1]) < 1.5);
    Condenser::new(a, b).expect("nested")
}

pub fn tent_on_line(cells: usize) -> Field {
    tent(&line(cells)).expect("finite")
}

/// Seeded random bump field.
pub fn bumps(d: &GridDomain, seed: u64) -> Field {
    Sample::bumps(d, seed).expect("finite").field
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        assert_eq!(interval_condenser(64).domain().len(), 64);
        assert!(annulus_condenser(33).inner().count() > 0);
        assert_eq!(tent_on_line(8).max(), 0.75);
        let d = square(16);
        assert_eq!(bumps(&d, 1), bumps(&d, 1));
        assert!(bumps(&d, 1).min() >= 0.0);
    }
}
