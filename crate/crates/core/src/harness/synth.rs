use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HarnessError, Splits};
use crate::data::{Dataset, EncodedExample, FieldSchema, Provenance, Slot, SplitTag};
use crate::interaction::{ffm_pairwise, FieldAwareEmbeddings};
use crate::nn::sigmoid;

/// Field-aware ground truth: every feature has an independent vector toward
/// every other field, so interactions differ by field pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_fields: usize,
    pub cardinality: usize,
    /// Latent dimension of the ground-truth embeddings.
    pub dim: usize,
    /// Label temperature: `y ~ Bernoulli(sigmoid(logit / noise))`, and
    /// `y = 1[logit > 0]` at 0.
    pub noise: f64,
    /// Standard deviation of ground-truth embedding entries.
    pub embed_scale: f64,
    /// Standard deviation of ground-truth linear weights.
    pub linear_scale: f64,
    pub bias: f64,
    /// Probability that a field pair carries any interaction. Active pairs are
    /// scaled by `1 / sqrt(pair_density)` so the logit variance is unchanged.
    pub pair_density: f64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_fields: 6,
            cardinality: 50,
            dim: 4,
            noise: 1.0,
            embed_scale: 0.5,
            linear_scale: 0.3,
            bias: 0.0,
            pair_density: 1.0,
            train: 50_000,
            validation: 10_000,
            test: 10_000,
            seed: 0,
        }
    }
}

/// Ground-truth logits (already divided by the temperature) per split and
/// the log-loss of the true probabilities on the drawn labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub train_logits: Vec<f64>,
    pub validation_logits: Vec<f64>,
    pub test_logits: Vec<f64>,
    pub bayes_train: f64,
    pub bayes_validation: f64,
    pub bayes_test: f64,
    /// Mean true click probability over all drawn rows.
    pub marginal: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub splits: Splits,
    pub truth: GroundTruth,
}

fn bayes(logits: &[f64], examples: &[EncodedExample]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let total: f64 = logits
        .iter()
        .zip(examples)
        .map(|(&z, e)| {
            if e.label == 1 {
                crate::nn::softplus(-z)
            } else {
                crate::nn::softplus(z)
            }
        })
        .sum();
    total / logits.len() as f64
}

/// Symmetric `f x f` weights: 0 for inactive pairs and `s` for active
/// ones, where `s = 1 / sqrt(density)`. At least one pair is always active.
fn pair_weights(f: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (mut w, s) = (vec![0.0; f * f], density.sqrt().recip());
    let mut any = false;
    for a in 0..f {
        for b in a + 1..f {
            if rng.random::<f64>() < density {
                w[a * f + b] = s;
                w[b * f + a] = s;
                any = true;
            }
        }
    }
    if !any {
        w[1] = s;
        w[f] = s;
    }
    w
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, HarnessError> {
    if spec.num_fields < 2 || spec.cardinality < 2 || spec.dim == 0 {
        return Err(HarnessError::Config(
            "synthetic data needs >= 2 fields, cardinality >= 2 and dim >= 1".into(),
        ));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(HarnessError::Config(format!("noise {} is invalid", spec.noise)));
    }
    if !(spec.pair_density > 0.0 && spec.pair_density <= 1.0) {
        return Err(HarnessError::Config(format!("pair_density {} is outside (0, 1]", spec.pair_density)));
    }
    if spec.train == 0 || spec.validation == 0 {
        return Err(HarnessError::Config("train and validation sizes must be >= 1".into()));
    }
    let schema = FieldSchema::categorical(&vec![spec.cardinality; spec.num_fields])?;
    let (n, f, d) = (schema.num_features(), spec.num_fields, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |s: f64| Normal::new(0.0, s).map_err(|e| HarnessError::Config(e.to_string()));
    let (emb_dist, lin_dist) = (normal(spec.embed_scale)?, normal(spec.linear_scale)?);
    let mut table: Vec<f64> = (0..n * f * d).map(|_| emb_dist.sample(&mut rng)).collect();
    if spec.pair_density < 1.0 {
        let weights = pair_weights(f, spec.pair_density, &mut rng);
        for (feature, row) in table.chunks_mut(f * d).enumerate() {
            let own = schema.field_of_feature(feature).expect("feature in schema");
            for (target, v) in row.chunks_mut(d).enumerate() {
                let s = weights[own * f + target].sqrt();
                v.iter_mut().for_each(|x| *x *= s);
            }
        }
    }
    let emb = FieldAwareEmbeddings::from_table(n, f, d, table).map_err(|e| HarnessError::Config(e.to_string()))?;
    let w: Vec<f64> = (0..n).map(|_| lin_dist.sample(&mut rng)).collect();

    let mut draw = |rows: usize, tag: SplitTag| {
        let mut examples = Vec::with_capacity(rows);
        let mut logits = Vec::with_capacity(rows);
        for _ in 0..rows {
            let slots: Vec<Slot> = schema
                .fields()
                .iter()
                .map(|fs| Slot {
                    index: fs.index_base + rng.random_range(0..fs.slots()),
                    value: 1.0,
                })
                .collect();
            let raw = spec.bias + slots.iter().map(|s| w[s.index]).sum::<f64>() + ffm_pairwise(&emb, &slots);
            let (z, label) = if spec.noise == 0.0 {
                (raw, u8::from(raw > 0.0))
            } else {
                let z = raw / spec.noise;
                (z, u8::from(rng.random::<f64>() < sigmoid(z)))
            };
            logits.push(z);
            examples.push(EncodedExample { label, slots });
        }
        let source = format!("synthetic(seed={})", spec.seed);
        (Dataset::new(schema.clone(), examples, Provenance::new(source, tag)), logits)
    };
    let (train, train_logits) = draw(spec.train, SplitTag::Train);
    let (validation, validation_logits) = draw(spec.validation, SplitTag::Validation);
    let (test, test_logits) = draw(spec.test, SplitTag::Test);

    let all = train_logits.iter().chain(&validation_logits).chain(&test_logits);
    let marginal = if spec.noise == 0.0 {
        all.clone().filter(|&&z| z > 0.0).count() as f64
    } else {
        all.clone().map(|&z| sigmoid(z)).sum::<f64>()
    } / all.count() as f64;
    let truth = GroundTruth {
        bayes_train: if spec.noise == 0.0 { 0.0 } else { bayes(&train_logits, train.examples()) },
        bayes_validation: if spec.noise == 0.0 { 0.0 } else { bayes(&validation_logits, validation.examples()) },
        bayes_test: if spec.noise == 0.0 { 0.0 } else { bayes(&test_logits, test.examples()) },
        train_logits,
        validation_logits,
        test_logits,
        marginal,
    };
    Ok(SyntheticData {
        spec: spec.clone(),
        splits: Splits {
            train,
            validation,
            test: (spec.test > 0).then_some(test),
        },
        truth,
    })
}
