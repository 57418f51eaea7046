//! Records of `(p, C1, C2, C_bar)` and their grouping by microstructural parameters.

use serde::{Deserialize, Serialize};

use crate::parametric::MicroParams;
use crate::tensor::MandelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub p: MicroParams,
    pub c1: MandelMatrix,
    pub c2: MandelMatrix,
    pub cbar: MandelMatrix,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub q_dim: usize,
    pub samples: Vec<Sample>,
}

/// Samples sharing one parameter point.
#[derive(Debug, Clone)]
pub struct Group<'a> {
    pub p: MicroParams,
    pub samples: Vec<&'a Sample>,
}

impl Dataset {
    pub fn new(q_dim: usize) -> Self {
        Dataset {
            q_dim,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Groups the selected samples by parameter point, in order of first appearance.
    pub fn groups(&self, keep: impl Fn(&Sample) -> bool) -> Vec<Group<'_>> {
        let mut out: Vec<Group<'_>> = Vec::new();
        for s in self.samples.iter().filter(|s| keep(s)) {
            match out.iter_mut().find(|g| g.p == s.p) {
                Some(g) => g.samples.push(s),
                None => out.push(Group {
                    p: s.p.clone(),
                    samples: vec![s],
                }),
            }
        }
        out
    }

    pub fn parameter_points(&self) -> Vec<MicroParams> {
        self.groups(|_| true).into_iter().map(|g| g.p).collect()
    }
}
