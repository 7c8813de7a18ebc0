//! Shared helpers for the crate's unit tests: quickly built models with known
//! dependence, used to exercise estimation, forecasting and testing code.

use crate::copar::{canonical_blocks, BlockLabel, CoparModel};
use crate::margins::Margin;
use crate::pair_copulas::{Family, PairCopula};
use std::collections::BTreeMap;

pub(crate) fn std_norm() -> Margin {
    Margin::normal(0.0, 1.0).unwrap()
}

pub(crate) fn labels(specs: &[&str]) -> Vec<BlockLabel> {
    specs.iter().map(|s| s.parse().unwrap()).collect()
}

/// Model with Gaussian copulas at the listed blocks (by label text and
/// Kendall tau) and independence everywhere else.
pub(crate) fn gaussian_model(
    m: usize,
    k: usize,
    taus: &[(&str, f64)],
    margins: Vec<Margin>,
) -> CoparModel {
    let mut blocks: BTreeMap<BlockLabel, PairCopula> = canonical_blocks(m, k)
        .into_iter()
        .map(|l| (l, PairCopula::Independence))
        .collect();
    for &(label, tau) in taus {
        let label: BlockLabel = label.parse().unwrap();
        assert!(blocks.contains_key(&label), "unknown block {label}");
        blocks.insert(label, Family::Gaussian.start_from_tau(tau));
    }
    CoparModel::new(m, k, margins, blocks).unwrap()
}

/// The five-block order-1 bivariate test model used throughout.
pub(crate) fn two_series_model() -> CoparModel {
    gaussian_model(
        2,
        1,
        &[
            ("s1.lag1", 0.5),
            ("s1->s2.lag0", 0.4),
            ("s1->s2.lag1", 0.3),
            ("s2->s1.lag1", 0.2),
            ("s2.lag1", 0.3),
        ],
        vec![std_norm(), std_norm()],
    )
}

pub(crate) fn independence_model(m: usize, k: usize) -> CoparModel {
    let blocks = canonical_blocks(m, k)
        .into_iter()
        .map(|l| (l, PairCopula::Independence))
        .collect();
    let margins = (0..m).map(|_| std_norm()).collect();
    CoparModel::new(m, k, margins, blocks).unwrap()
}
