//! Order-preserving layer selection strategies.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// How the distilled layer pairs are chosen each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStrategy {
    /// Fresh uniform draw of K-subsets from both models every training step.
    Random,
    /// The last K layers of teacher and student, fixed for the whole run.
    Last,
    /// Teacher layers at stride `k` starting from layer 1; student side uses
    /// its last K layers. Fixed for the whole run.
    Skip { stride: usize },
}

/// Paired strictly-increasing layer index lists (1-based) into the teacher
/// and student stacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSelection {
    pub teacher: Vec<usize>,
    pub student: Vec<usize>,
}

impl LayerSelection {
    pub fn k(&self) -> usize {
        self.teacher.len()
    }
}

fn strictly_increasing(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Select `k` aligned layers from an `n`-layer teacher and an `m`-layer
/// student, preserving each model's layer order.
pub fn select_layers(
    strategy: SelectionStrategy,
    n: usize,
    m: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<LayerSelection> {
    if k == 0 {
        return Err(Error::invalid_parameter("layer count K must be positive"));
    }
    if !(n >= m && m >= k) {
        return Err(Error::invalid_parameter(format!(
            "layer counts must satisfy N >= M >= K, got N={n}, M={m}, K={k}"
        )));
    }
    let selection = match strategy {
        SelectionStrategy::Random => {
            let mut teacher: Vec<usize> =
                rng.sample_distinct(n, k).into_iter().map(|i| i + 1).collect();
            let mut student: Vec<usize> =
                rng.sample_distinct(m, k).into_iter().map(|i| i + 1).collect();
            teacher.sort_unstable();
            student.sort_unstable();
            LayerSelection { teacher, student }
        }
        SelectionStrategy::Last => LayerSelection {
            teacher: (n - k + 1..=n).collect(),
            student: (m - k + 1..=m).collect(),
        },
        SelectionStrategy::Skip { stride } => {
            if stride == 0 {
                return Err(Error::invalid_parameter("skip stride must be >= 1"));
            }
            let teacher: Vec<usize> = (0..k).map(|i| 1 + i * stride).collect();
            if *teacher.last().expect("k >= 1") > n {
                return Err(Error::invalid_parameter(format!(
                    "skip stride {stride} with K={k} exceeds teacher depth {n}"
                )));
            }
            LayerSelection {
                teacher,
                student: (m - k + 1..=m).collect(),
            }
        }
    };
    debug_assert!(strictly_increasing(&selection.teacher));
    debug_assert!(strictly_increasing(&selection.student));
    Ok(selection)
}
