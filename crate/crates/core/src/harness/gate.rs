use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::data::{EncodedExample, FieldSchema, Slot};
use crate::model::{Model, ModelSpec};
use crate::nn::{GradCheckConfig, GradCheckReport};

/// Per-field cardinality of the gradient-check schema.
pub const GATE_CARDINALITY: usize = 5;

/// Hidden widths above this are shrunk for the gradient check, which costs two
/// forward passes per parameter.
const GATE_MAX_WIDTH: usize = 8;

/// `n` random one-hot examples with random labels.
pub fn toy_batch(schema: &FieldSchema, n: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| EncodedExample {
            label: rng.random_range(0..2u8),
            slots: schema
                .fields()
                .iter()
                .map(|f| Slot {
                    index: f.index_base + rng.random_range(0..f.slots()),
                    value: 1.0,
                })
                .collect(),
        })
        .collect()
}

/// Overwrites every parameter with `U(-0.8, 0.8)` (BN `gamma` with
/// `U(0.6, 1.4)`), so no path through the model is degenerate.
pub fn scramble(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in model.blocks_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    if let Some(bn) = model.params.bn.as_mut() {
        bn.gamma.iter_mut().for_each(|g| *g = 1.0 + *g * 0.5);
    }
}

/// Finite-difference check of `spec` on a toy schema with `num_fields` fields
/// of cardinality [`GATE_CARDINALITY`] and a batch of `batch` rows.
pub fn gradient_gate(
    spec: &ModelSpec,
    num_fields: usize,
    batch: usize,
    l2: f64,
    seed: u64,
) -> Result<GradCheckReport, HarnessError> {
    let schema = FieldSchema::categorical(&vec![GATE_CARDINALITY; num_fields])?;
    let mut spec = spec.clone();
    spec.hidden.iter_mut().for_each(|h| *h = (*h).min(GATE_MAX_WIDTH));
    let mut model = Model::new(spec, schema.clone(), seed)?;
    scramble(&mut model, seed ^ 0x5eed);
    let data = toy_batch(&schema, batch, seed);
    let refs: Vec<&EncodedExample> = data.iter().collect();
    Ok(model.check_gradients(&refs, l2, GradCheckConfig::default())?)
}
