use fnfm::data::{EncodedExample, FieldSchema, Slot};
use fnfm::interaction::{self as ix, FieldAwareEmbeddings, PlainEmbeddings};
use fnfm::model::{nll_loss, Embeddings, InteractionMode, Model, ModelKind, ModelSpec};
use fnfm::nn::{sigmoid, BnMode, DenseLayer, GradCheckConfig, Matrix};
use fnfm::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_examples(schema: &FieldSchema, n: usize, seed: u64) -> Vec<EncodedExample> {
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

/// Model with every parameter drawn at a scale where all paths carry signal.
fn scrambled(spec: ModelSpec, schema: &FieldSchema, seed: u64) -> Model {
    let mut model = Model::new(spec, schema.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = model.blocks().len();
    for b in 0..n {
        for v in model.block_mut(b) {
            *v = rng.random_range(-0.8..0.8);
        }
    }
    if let Some(bn) = model.params.bn.as_mut() {
        bn.gamma.iter_mut().for_each(|g| *g = 1.0 + *g * 0.5);
    }
    model
}

fn spec(kind: ModelKind, bn: bool) -> ModelSpec {
    match kind {
        ModelKind::Lr => ModelSpec::lr(),
        _ => ModelSpec::new(kind, 2, vec![4], bn),
    }
}

#[test]
fn zero_parameters_give_half_probability() {
    let schema = FieldSchema::categorical(&[4, 3, 5]).unwrap();
    let data = toy_examples(&schema, 20, 1);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    for kind in ModelKind::ALL {
        for bn in [false, true] {
            let model = Model::zeros(spec(kind, bn), schema.clone()).unwrap();
            let (logits, _) = model.forward(&batch, BnMode::Training, Exec::Sequential).unwrap();
            assert!(logits.iter().all(|&z| z == 0.0), "{kind}");
            assert!(model.predict(&batch, Exec::Sequential).unwrap().iter().all(|&p| p == 0.5));
        }
    }
}

#[test]
fn every_kind_passes_gradient_check() {
    let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
    let data = toy_examples(&schema, 8, 2);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    for kind in ModelKind::ALL {
        for bn in [false, true] {
            for l2 in [0.0, 0.01] {
                let mut model = scrambled(spec(kind, bn), &schema, 3);
                let report = model.check_gradients(&batch, l2, GradCheckConfig::default()).unwrap();
                assert!(report.passed(), "{kind} bn={bn} l2={l2}: {report:?}");
            }
        }
    }
}

#[test]
fn pool_variant_passes_gradient_check() {
    let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
    let data = toy_examples(&schema, 8, 4);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    for bn in [false, true] {
        let s = spec(ModelKind::Fnfm, bn).with_interaction(InteractionMode::FieldPool);
        let mut model = scrambled(s, &schema, 5);
        assert_eq!(model.deep_width(), 2);
        assert!(model.check_gradients(&batch, 0.0, GradCheckConfig::default()).unwrap().passed());
    }
}

#[test]
fn ffm_logit_is_linear_plus_pairwise() {
    let schema = FieldSchema::categorical(&[4, 6, 3, 5]).unwrap();
    let data = toy_examples(&schema, 30, 6);
    let model = scrambled(ModelSpec::new(ModelKind::Ffm, 3, vec![], false), &schema, 7);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let (logits, _) = model.forward(&batch, BnMode::Inference, Exec::Sequential).unwrap();
    let Embeddings::FieldAware(e) = &model.params.embeddings else { panic!() };
    for (ex, z) in data.iter().zip(logits) {
        let lin = &model.params.linear;
        let mut expected = lin.w0;
        for s in &ex.slots {
            expected += lin.w[s.index] * s.value;
        }
        expected += ix::ffm_pairwise(e, &ex.slots);
        assert_eq!(z, expected);
    }
}

#[test]
fn hand_composed_fnfm() {
    // f = 2, D = 3: one concat segment feeds an identity hidden layer whose
    // bias keeps every unit in the ReLU's linear range, then a summing head.
    let schema = FieldSchema::categorical(&[3, 4]).unwrap();
    let mut model = scrambled(ModelSpec::new(ModelKind::Fnfm, 3, vec![3], false), &schema, 8);
    model.params.mlp.layers = vec![
        DenseLayer::new(Matrix::identity(3), vec![100.0; 3]).unwrap(),
        DenseLayer::new(Matrix::from_vec(1, 3, vec![1.0; 3]).unwrap(), vec![-300.0]).unwrap(),
    ];
    let data = toy_examples(&schema, 10, 9);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let (logits, _) = model.forward(&batch, BnMode::Inference, Exec::Sequential).unwrap();
    let Embeddings::FieldAware(e) = &model.params.embeddings else { panic!() };
    for (ex, z) in data.iter().zip(logits) {
        let (a, b) = (ex.slots[0], ex.slots[1]);
        let lin = &model.params.linear;
        let mut expected = lin.w0 + lin.w[a.index] * a.value + lin.w[b.index] * b.value;
        for k in 0..3 {
            expected += a.value * e.row(a.index, 1)[k] * b.value * e.row(b.index, 0)[k];
        }
        assert!((z - expected).abs() < 1e-12);
    }
}

#[test]
fn lr_gradient_is_the_logistic_identity() {
    let schema = FieldSchema::categorical(&[3, 3]).unwrap();
    let data = toy_examples(&schema, 12, 10);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let model = scrambled(ModelSpec::lr(), &schema, 11);
    let (_, grads, _) = model.loss_and_grad(&batch, 0.0, Exec::Sequential).unwrap();
    let (logits, _) = model.forward(&batch, BnMode::Training, Exec::Sequential).unwrap();
    let mut expected = vec![0.0; schema.num_features()];
    for (ex, z) in data.iter().zip(&logits) {
        let r = (sigmoid(*z) - ex.label_f64()) / data.len() as f64;
        for s in &ex.slots {
            expected[s.index] += r * s.value;
        }
    }
    assert_eq!(grads.linear.to_dense(schema.num_features()), expected);
}

#[test]
fn zero_upstream_and_untouched_rows() {
    let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
    let data = toy_examples(&schema, 6, 12);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    let active: std::collections::HashSet<usize> = data.iter().flat_map(|e| e.slots.iter().map(|s| s.index)).collect();
    for kind in ModelKind::ALL {
        let model = scrambled(spec(kind, true), &schema, 13);
        let (_, cache) = model.forward(&batch, BnMode::Training, Exec::Sequential).unwrap();
        let g = model.backward(&batch, &cache, &[0.0; 6], Exec::Sequential).unwrap();
        assert!(g.to_dense(&model).iter().flatten().all(|v| *v == 0.0), "{kind}");

        let (_, g, _) = model.loss_and_grad(&batch, 0.1, Exec::Sequential).unwrap();
        let f = schema.num_fields();
        for &row in g.embeddings.row_ids() {
            let feature = if kind.field_aware() { row / f } else { row };
            assert!(active.contains(&feature));
        }
        for &row in g.linear.row_ids() {
            assert!(active.contains(&row));
        }
    }
}

#[test]
fn stale_cache_is_rejected() {
    let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
    let a = toy_examples(&schema, 6, 14);
    let b = toy_examples(&schema, 6, 15);
    let model = scrambled(spec(ModelKind::Fnfm, true), &schema, 16);
    let ra: Vec<&EncodedExample> = a.iter().collect();
    let rb: Vec<&EncodedExample> = b.iter().collect();
    let (_, cache) = model.forward(&ra, BnMode::Training, Exec::Sequential).unwrap();
    assert!(model.backward(&rb, &cache, &[0.1; 6], Exec::Sequential).is_err());
    let (_, cache) = model.forward(&ra, BnMode::Inference, Exec::Sequential).unwrap();
    assert!(model.backward(&ra, &cache, &[0.1; 6], Exec::Sequential).is_err());
}

#[test]
fn probabilities_are_strictly_inside_the_unit_interval() {
    let schema = FieldSchema::categorical(&[5, 5, 5]).unwrap();
    let data = toy_examples(&schema, 50, 17);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    for kind in ModelKind::ALL {
        let model = scrambled(spec(kind, false), &schema, 18);
        for p in model.predict(&batch, Exec::Sequential).unwrap() {
            assert!(p > 0.0 && p < 1.0);
        }
    }
}

#[test]
fn sequential_and_parallel_are_bit_identical() {
    let schema = FieldSchema::categorical(&[20, 30, 10, 40]).unwrap();
    let data = toy_examples(&schema, 1000, 19);
    let batch: Vec<&EncodedExample> = data.iter().collect();
    for kind in ModelKind::ALL {
        let model = scrambled(ModelSpec::new(kind, 4, vec![16, 8], true), &schema, 20);
        let model = if kind == ModelKind::Lr { scrambled(ModelSpec::lr(), &schema, 20) } else { model };
        let (l1, g1, _) = model.loss_and_grad(&batch, 1e-3, Exec::Sequential).unwrap();
        let (l2, g2, _) = model.loss_and_grad(&batch, 1e-3, Exec::Parallel).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }
}

#[test]
fn loss_matches_metric_definition() {
    let (l, _) = nll_loss(&[2.0f64.ln() - 3.0f64.ln()], &[1.0]).unwrap();
    // p = 0.4
    assert!((l + 0.4f64.ln()).abs() < 1e-15);
}

#[test]
fn tied_field_pool_total_is_fm_second_order() {
    let schema = FieldSchema::categorical(&[4, 5, 6, 3, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let table: Vec<f64> = (0..schema.num_features() * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let plain = PlainEmbeddings::from_table(schema.num_features(), 3, table).unwrap();
    let tied = FieldAwareEmbeddings::tied(&plain, 5);
    for ex in toy_examples(&schema, 20, 22) {
        let mut pooled = vec![0.0; 3];
        ix::field_pool_into(&tied, &ex.slots, &mut pooled);
        let total: f64 = pooled.iter().sum();
        assert!((total - ix::fm_pairwise(&plain, &ex.slots)).abs() < 1e-12);
    }
}

/// Builds the twin of an FNFM model under the field permutation `perm`
/// (new field `t` is old field `perm[t]`) and checks the logits agree.
#[test]
fn permuted_field_order_twin_is_logit_identical() {
    let cards = [3, 4, 2, 5];
    let perm = [2, 0, 3, 1];
    let schema = FieldSchema::categorical(&cards).unwrap();
    let (f, d) = (4, 2);
    let model = scrambled(ModelSpec::new(ModelKind::Fnfm, d, vec![6, 3], true), &schema, 23);
    let mut bn = model.params.bn.clone().unwrap();
    bn.running_mean.iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
    bn.running_var.iter_mut().enumerate().for_each(|(i, v)| *v = 1.0 + 0.05 * i as f64);
    let mut model = model;
    model.params.bn = Some(bn);

    let twin_cards: Vec<usize> = perm.iter().map(|&o| cards[o]).collect();
    let twin_schema = FieldSchema::categorical(&twin_cards).unwrap();
    let mut twin = Model::zeros(model.spec().clone(), twin_schema.clone()).unwrap();
    let inv: Vec<usize> = (0..f).map(|o| perm.iter().position(|&p| p == o).unwrap()).collect();
    // feature remap: old global index -> new global index
    let remap = |old: usize| {
        let of = schema.field_of_feature(old).unwrap();
        let local = old - schema.field(of).index_base;
        twin_schema.field(inv[of]).index_base + local
    };
    let Embeddings::FieldAware(src) = &model.params.embeddings else { panic!() };
    let Embeddings::FieldAware(dst) = &mut twin.params.embeddings else { panic!() };
    for old in 0..schema.num_features() {
        for of in 0..f {
            dst.row_mut(remap(old), inv[of]).copy_from_slice(src.row(old, of));
        }
        twin.params.linear.w[remap(old)] = model.params.linear.w[old];
    }
    twin.params.linear.w0 = model.params.linear.w0;
    // MLP input columns: new pair (i, j) is old pair (perm[i], perm[j]) sorted.
    let old_pairs = ix::pair_order(f);
    let new_pairs = ix::pair_order(f);
    let src_col = |p: usize, k: usize| {
        let (i, j) = new_pairs[p];
        let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
        old_pairs.iter().position(|&q| q == (a, b)).unwrap() * d + k
    };
    let width = model.deep_width();
    let first = &model.params.mlp.layers[0];
    let mut w = Matrix::zeros(first.outputs(), width);
    let (sbn, tbn) = (model.params.bn.as_ref().unwrap(), twin.params.bn.as_mut().unwrap());
    for p in 0..new_pairs.len() {
        for k in 0..d {
            let (c, s) = (p * d + k, src_col(p, k));
            for r in 0..first.outputs() {
                w.set(r, c, first.weight.get(r, s));
            }
            tbn.gamma[c] = sbn.gamma[s];
            tbn.beta[c] = sbn.beta[s];
            tbn.running_mean[c] = sbn.running_mean[s];
            tbn.running_var[c] = sbn.running_var[s];
        }
    }
    twin.params.mlp.layers = model.params.mlp.layers.clone();
    twin.params.mlp.layers[0].weight = w;

    let data = toy_examples(&schema, 40, 24);
    let twin_data: Vec<EncodedExample> = data
        .iter()
        .map(|ex| EncodedExample {
            label: ex.label,
            slots: perm.iter().map(|&o| Slot { index: remap(ex.slots[o].index), value: ex.slots[o].value }).collect(),
        })
        .collect();
    let a: Vec<&EncodedExample> = data.iter().collect();
    let b: Vec<&EncodedExample> = twin_data.iter().collect();
    for mode in [BnMode::Training, BnMode::Inference] {
        let (za, _) = model.forward(&a, mode, Exec::Sequential).unwrap();
        let (zb, _) = twin.forward(&b, mode, Exec::Sequential).unwrap();
        for (x, y) in za.iter().zip(&zb) {
            assert!((x - y).abs() < 1e-12, "{mode:?}: {x} vs {y}");
        }
    }
}

#[test]
fn from_parts_checks_shapes() {
    let schema = FieldSchema::categorical(&[3, 3, 3]).unwrap();
    let model = Model::new(ModelSpec::new(ModelKind::Fnfm, 2, vec![4], true), schema.clone(), 1).unwrap();
    let ok = Model::from_parts(model.spec().clone(), schema.clone(), model.params.clone()).unwrap();
    assert_eq!(ok, model);
    let wrong = ModelSpec::new(ModelKind::Fnfm, 2, vec![5], true);
    assert!(Model::from_parts(wrong, schema, model.params.clone()).is_err());
}
