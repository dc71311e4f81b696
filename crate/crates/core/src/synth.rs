//! Seeded synthetic activation-vector datasets.
//!
//! Every cluster (known or unknown) is an isotropic Gaussian around its
//! center. Randomness comes from ChaCha8 seeded with `seed`; known class `j`
//! (0-based) draws from stream `j` and unknown cluster `u` from stream
//! `2^32 + u`, so adding or removing clusters never changes the samples of the
//! others. Within a cluster samples are drawn train, eval, test in order, each
//! as N consecutive standard normals.
//!
//! Records are emitted cluster by cluster: known classes in index order, then
//! unknown clusters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingRecord, LabelMap, Split, SplitCounts};
use crate::error::{Error, Result};
use crate::UNKNOWN;

const UNKNOWN_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownCluster {
    pub name: String,
    pub center: Vec<f64>,
    pub sigma: f64,
    pub counts: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownCluster {
    pub name: String,
    pub center: Vec<f64>,
    pub sigma: f64,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub known: Vec<KnownCluster>,
    #[serde(default)]
    pub unknown: Vec<UnknownCluster>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub label_map: LabelMap,
    pub records: Vec<EmbeddingRecord>,
}

impl SynthSpec {
    /// `n` known classes with centers `scale * e_j`, so that argmax of a clean
    /// center is its own class.
    pub fn one_hot(n: usize, scale: f64, sigma: f64, counts: SplitCounts, seed: u64) -> Self {
        let known = (0..n)
            .map(|j| {
                let mut center = vec![0.0; n];
                center[j] = scale;
                KnownCluster {
                    name: format!("class{}", j + 1),
                    center,
                    sigma,
                    counts,
                }
            })
            .collect();
        SynthSpec {
            seed,
            known,
            unknown: Vec::new(),
        }
    }

    pub fn with_unknown(
        mut self,
        name: impl Into<String>,
        center: Vec<f64>,
        sigma: f64,
        test: usize,
    ) -> Self {
        self.unknown.push(UnknownCluster {
            name: name.into(),
            center,
            sigma,
            test,
        });
        self
    }

    /// Five one-hot classes (scale 10, sigma 1, 200/50/50 per class) plus two
    /// unknown clusters of 100 test samples each. `unknown-a` sits between all
    /// classes, so softmax is unsure of it; `unknown-b` lies far out along the
    /// class1 axis, so softmax is confidently wrong about it.
    pub fn standard(seed: u64) -> Self {
        let counts = SplitCounts {
            train: 200,
            eval: 50,
            test: 50,
        };
        SynthSpec::one_hot(5, 10.0, 1.0, counts, seed)
            .with_unknown("unknown-a", vec![15.0; 5], 1.0, 100)
            .with_unknown("unknown-b", vec![30.0, 5.0, 0.0, 0.0, 0.0], 1.0, 100)
    }

    pub fn num_classes(&self) -> usize {
        self.known.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.known.len();
        let bad = |reason: String| Error::InvalidParameter {
            name: "synth spec",
            reason,
        };
        let check = |name: &str, center: &[f64], sigma: f64| {
            if center.len() != n {
                return Err(bad(format!(
                    "{name}: center has length {}, expected {n}",
                    center.len()
                )));
            }
            if center.iter().any(|x| !x.is_finite()) {
                return Err(bad(format!("{name}: center is not finite")));
            }
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(bad(format!("{name}: sigma must be > 0")));
            }
            Ok(())
        };
        for c in &self.known {
            check(&c.name, &c.center, c.sigma)?;
        }
        for c in &self.unknown {
            check(&c.name, &c.center, c.sigma)?;
        }
        Ok(())
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        LabelMap::new(self.known.iter().map(|c| c.name.clone()))
    }
}

fn draw(rng: &mut ChaCha8Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            c + sigma * z
        })
        .collect()
}

fn cluster_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let label_map = spec.label_map()?;
    let mut records = Vec::new();
    for (j, c) in spec.known.iter().enumerate() {
        let mut rng = cluster_rng(spec.seed, j as u64);
        for split in Split::ALL {
            for i in 0..c.counts.get(split) {
                records.push(EmbeddingRecord {
                    sample_id: format!("{}-{split}-{i:05}", c.name),
                    split,
                    true_label: j + 1,
                    origin: None,
                    activations: draw(&mut rng, &c.center, c.sigma),
                });
            }
        }
    }
    for (u, c) in spec.unknown.iter().enumerate() {
        let mut rng = cluster_rng(spec.seed, UNKNOWN_STREAM_BASE + u as u64);
        for i in 0..c.test {
            records.push(EmbeddingRecord {
                sample_id: format!("{}-test-{i:05}", c.name),
                split: Split::Test,
                true_label: UNKNOWN,
                origin: Some(c.name.clone()),
                activations: draw(&mut rng, &c.center, c.sigma),
            });
        }
    }
    Ok(SynthDataset { label_map, records })
}
