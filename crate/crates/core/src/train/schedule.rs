use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered `(input, target)` pairs of a burst.
///
/// Inputs are taken in increasing index order, each paired with every other
/// frame in increasing order, except that the reference frame's block comes
/// last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSchedule {
    pub frames: usize,
    pub reference: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl PairSchedule {
    pub fn lexicographic(frames: usize, reference: usize) -> Result<Self> {
        if frames < 2 {
            return Err(Error::Data(format!("a burst needs at least 2 frames, got {frames}")));
        }
        if reference >= frames {
            return Err(Error::Data(format!(
                "reference {reference} outside a burst of {frames}"
            )));
        }
        let inputs = (0..frames).filter(|&i| i != reference).chain([reference]);
        let pairs = inputs
            .flat_map(|i| (0..frames).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Ok(Self {
            frames,
            reference,
            pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
