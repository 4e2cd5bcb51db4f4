use super::params::{BnParamGrads, Embeddings, Gradients, LayerGrads, Model};
use super::{loss, InteractionMode, ModelError, ModelKind};
use crate::data::{EncodedExample, Slot};
use crate::exec::{Exec, CHUNK};
use crate::interaction as ix;
use crate::nn::{
    grad_check, relu_backward, relu_forward, sigmoid, BnCache, BnMode, DenseCache, GradCheckConfig, GradCheckReport, Matrix,
};
use crate::sparse::SparseRows;

/// Activations retained by [`Model::forward`] for the backward pass and for
/// MLP-input diagnostics.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: BnMode,
    batch_len: usize,
    digest: u64,
    deep_input: Option<Matrix>,
    mlp_input: Option<Matrix>,
    bn: Option<BnCache>,
    /// Per hidden layer: dense cache and pre-activation.
    hidden: Vec<(DenseCache, Matrix)>,
    head: Option<DenseCache>,
}

impl ForwardCache {
    pub fn mode(&self) -> BnMode {
        self.mode
    }

    pub fn batch_len(&self) -> usize {
        self.batch_len
    }

    /// Interaction-layer output before batch normalization.
    pub fn deep_input(&self) -> Option<&Matrix> {
        self.deep_input.as_ref()
    }

    /// The matrix fed to the first dense layer (after BN when present).
    pub fn mlp_input(&self) -> Option<&Matrix> {
        self.mlp_input.as_ref()
    }

    pub fn bn(&self) -> Option<&BnCache> {
        self.bn.as_ref()
    }
}

fn digest(batch: &[&EncodedExample]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for ex in batch {
        for s in &ex.slots {
            h = (h ^ s.index as u64).wrapping_mul(0x100_0000_01b3);
            h = (h ^ s.value.to_bits()).wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

impl Model {
    fn check_batch(&self, batch: &[&EncodedExample]) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        let (f, n) = (self.schema.num_fields(), self.schema.num_features());
        for ex in batch {
            if ex.slots.len() != f || ex.slots.iter().any(|s| s.index >= n) {
                ex.conforms_to(&self.schema)?;
                return Err(ModelError::Shape {
                    expected: format!("{f} slots with indices below {n}"),
                    found: format!("{:?}", ex.slots),
                });
            }
        }
        Ok(())
    }

    /// Linear part plus any scalar second-order term.
    fn shallow_logit(&self, slots: &[Slot]) -> f64 {
        let lin = &self.params.linear;
        let mut z = lin.w0;
        for s in slots {
            z += lin.w[s.index] * s.value;
        }
        match (&self.params.embeddings, self.spec.kind) {
            (Embeddings::Plain(e), ModelKind::Fm | ModelKind::DeepFm) => z += ix::fm_pairwise(e, slots),
            (Embeddings::FieldAware(e), ModelKind::Ffm) => z += ix::ffm_pairwise(e, slots),
            _ => {}
        }
        z
    }

    fn deep_row(&self, slots: &[Slot], out: &mut [f64]) {
        match (&self.params.embeddings, self.spec.kind) {
            (Embeddings::Plain(e), ModelKind::Nfm) => ix::bi_interaction_pool_into(e, slots, out),
            (Embeddings::Plain(e), ModelKind::DeepFm) => ix::embed_concat_into(e, slots, out),
            (Embeddings::FieldAware(e), ModelKind::Fnfm) => match self.spec.interaction {
                InteractionMode::Concat => ix::bi_interaction_concat_into(e, slots, out),
                InteractionMode::FieldPool => ix::field_pool_into(e, slots, out),
            },
            _ => {}
        }
    }

    fn deep_row_backward(&self, slots: &[Slot], upstream: &[f64], grad: &mut SparseRows) {
        match (&self.params.embeddings, self.spec.kind) {
            (Embeddings::Plain(e), ModelKind::Nfm) => ix::bi_interaction_pool_backward(e, slots, upstream, grad, None),
            (Embeddings::Plain(e), ModelKind::DeepFm) => ix::embed_concat_backward(e, slots, upstream, grad, None),
            (Embeddings::FieldAware(e), ModelKind::Fnfm) => match self.spec.interaction {
                InteractionMode::Concat => ix::bi_interaction_concat_backward(e, slots, upstream, grad, None),
                InteractionMode::FieldPool => ix::field_pool_backward(e, slots, upstream, grad, None),
            },
            _ => {}
        }
    }

    /// Logits for a batch. Training mode normalizes with batch statistics and
    /// needs at least two rows when BN is present.
    pub fn forward(
        &self,
        batch: &[&EncodedExample],
        mode: BnMode,
        exec: Exec,
    ) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        self.check_batch(batch)?;
        let width = self.deep_width();
        let parts = exec.map_chunks(batch, CHUNK, |_, chunk| {
            let mut z = Vec::with_capacity(chunk.len());
            let mut rows = vec![0.0; chunk.len() * width];
            for (k, ex) in chunk.iter().enumerate() {
                z.push(self.shallow_logit(&ex.slots));
                if width > 0 {
                    self.deep_row(&ex.slots, &mut rows[k * width..(k + 1) * width]);
                }
            }
            (z, rows)
        });
        let mut logits = Vec::with_capacity(batch.len());
        let mut deep = Vec::with_capacity(batch.len() * width);
        for (z, rows) in parts {
            logits.extend(z);
            deep.extend(rows);
        }
        let mut cache = ForwardCache {
            mode,
            batch_len: batch.len(),
            digest: digest(batch),
            deep_input: None,
            mlp_input: None,
            bn: None,
            hidden: Vec::new(),
            head: None,
        };
        if width == 0 {
            return Ok((logits, cache));
        }
        let deep = Matrix::from_vec(batch.len(), width, deep)?;
        let mut x = match &self.params.bn {
            Some(bn) => {
                let (y, c) = bn.forward(&deep, mode)?;
                cache.bn = Some(c);
                y
            }
            None => deep.clone(),
        };
        cache.deep_input = Some(deep);
        cache.mlp_input = Some(x.clone());
        let layers = &self.params.mlp.layers;
        let (head, hidden) = layers.split_last().expect("deep model has a head layer");
        for layer in hidden {
            let (pre, c) = layer.forward(&x, exec)?;
            x = relu_forward(&pre);
            cache.hidden.push((c, pre));
        }
        let (out, c) = head.forward(&x, exec)?;
        cache.head = Some(c);
        for (z, o) in logits.iter_mut().zip(out.as_slice()) {
            *z += o;
        }
        Ok((logits, cache))
    }

    /// Gradient of a scalar loss given `dlogits = dL/dlogit` for the cached batch.
    pub fn backward(
        &self,
        batch: &[&EncodedExample],
        cache: &ForwardCache,
        dlogits: &[f64],
        exec: Exec,
    ) -> Result<Gradients, ModelError> {
        if cache.batch_len != batch.len() || cache.digest != digest(batch) {
            return Err(ModelError::State("forward cache does not belong to this batch".into()));
        }
        if dlogits.len() != batch.len() {
            return Err(ModelError::Shape {
                expected: format!("{} logit gradients", batch.len()),
                found: format!("{}", dlogits.len()),
            });
        }
        let width = self.deep_width();
        let mut mlp_grads = Vec::new();
        let mut bn_grads = None;
        let mut d_deep: Option<Matrix> = None;
        if width > 0 {
            let head_cache = cache
                .head
                .as_ref()
                .ok_or_else(|| ModelError::State("forward cache has no MLP activations".into()))?;
            let layers = &self.params.mlp.layers;
            let (head, hidden) = layers.split_last().expect("deep model has a head layer");
            let dy = Matrix::from_vec(batch.len(), 1, dlogits.to_vec())?;
            let g = head.backward(head_cache, &dy, exec)?;
            mlp_grads.push(LayerGrads {
                weight: g.weight,
                bias: g.bias,
            });
            let mut dx = g.input;
            for (layer, (c, pre)) in hidden.iter().zip(&cache.hidden).rev() {
                let dpre = relu_backward(pre, &dx);
                let g = layer.backward(c, &dpre, exec)?;
                mlp_grads.push(LayerGrads {
                    weight: g.weight,
                    bias: g.bias,
                });
                dx = g.input;
            }
            mlp_grads.reverse();
            if let (Some(bn), Some(c)) = (&self.params.bn, &cache.bn) {
                let g = bn.backward(c, &dx)?;
                bn_grads = Some(BnParamGrads {
                    gamma: g.gamma,
                    beta: g.beta,
                });
                dx = g.input;
            }
            d_deep = Some(dx);
        }

        let dim = self.params.embeddings.dim();
        let kind = self.spec.kind;
        let indexed: Vec<(usize, &EncodedExample)> = batch.iter().copied().enumerate().collect();
        let parts = exec.map_chunks(&indexed, CHUNK, |_, chunk| {
            let mut lin = SparseRows::new(1);
            let mut emb = SparseRows::new(dim);
            let mut w0 = 0.0;
            for &(r, ex) in chunk {
                let g = dlogits[r];
                w0 += g;
                for s in &ex.slots {
                    lin.row_mut(s.index)[0] += g * s.value;
                }
                match (&self.params.embeddings, kind) {
                    (Embeddings::Plain(e), ModelKind::Fm | ModelKind::DeepFm) => {
                        ix::fm_pairwise_backward(e, &ex.slots, g, &mut emb, None)
                    }
                    (Embeddings::FieldAware(e), ModelKind::Ffm) => ix::ffm_pairwise_backward(e, &ex.slots, g, &mut emb, None),
                    _ => {}
                }
                if let Some(d) = &d_deep {
                    self.deep_row_backward(&ex.slots, d.row(r), &mut emb);
                }
            }
            (w0, lin, emb)
        });
        let mut grads = Gradients {
            w0: 0.0,
            linear: SparseRows::new(1),
            embeddings: SparseRows::new(dim),
            mlp: mlp_grads,
            bn: bn_grads,
        };
        for (w0, lin, emb) in parts {
            grads.w0 += w0;
            grads.linear.merge(&lin);
            grads.embeddings.merge(&emb);
        }
        Ok(grads)
    }

    /// Probabilities in inference mode.
    pub fn predict(&self, batch: &[&EncodedExample], exec: Exec) -> Result<Vec<f64>, ModelError> {
        let (logits, _) = self.forward(batch, BnMode::Inference, exec)?;
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    /// Inference-mode probabilities for a whole slice of examples, scored in
    /// blocks of `block` rows.
    pub fn predict_all(&self, examples: &[EncodedExample], block: usize, exec: Exec) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(block.max(1)) {
            let refs: Vec<&EncodedExample> = chunk.iter().collect();
            out.extend(self.predict(&refs, exec)?);
        }
        Ok(out)
    }

    /// `lambda / 2` times the squared norm of the linear weights and embedding
    /// rows read by `batch`, matching [`Gradients::add_l2`].
    pub fn l2_penalty(&self, batch: &[&EncodedExample], lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let mut lin = std::collections::BTreeSet::new();
        let mut rows = std::collections::BTreeSet::new();
        let f = self.schema.num_fields();
        for ex in batch {
            for (t, s) in ex.slots.iter().enumerate() {
                lin.insert(s.index);
                match &self.params.embeddings {
                    Embeddings::None => {}
                    Embeddings::Plain(_) => {
                        rows.insert(s.index);
                    }
                    Embeddings::FieldAware(_) => {
                        for j in (0..f).filter(|&j| j != t) {
                            rows.insert(s.index * f + j);
                        }
                    }
                }
            }
        }
        let d = self.params.embeddings.dim();
        let table = self.params.embeddings.table();
        let mut sq: f64 = lin.iter().map(|&m| self.params.linear.w[m].powi(2)).sum();
        for r in rows {
            sq += table[r * d..(r + 1) * d].iter().map(|v| v * v).sum::<f64>();
        }
        0.5 * lambda * sq
    }

    /// Mean log-loss plus the touched-row L2 penalty, with its gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[&EncodedExample],
        l2: f64,
        exec: Exec,
    ) -> Result<(f64, Gradients, ForwardCache), ModelError> {
        let (logits, cache) = self.forward(batch, BnMode::Training, exec)?;
        let labels: Vec<f64> = batch.iter().map(|e| e.label_f64()).collect();
        let (nll, dlogits) = loss::nll_loss(&logits, &labels)?;
        let mut grads = self.backward(batch, &cache, &dlogits, exec)?;
        grads.add_l2(&self.params, l2);
        Ok((nll + self.l2_penalty(batch, l2), grads, cache))
    }

    /// The objective minimized by [`Model::loss_and_grad`], without gradients.
    pub fn batch_loss(&self, batch: &[&EncodedExample], l2: f64, mode: BnMode, exec: Exec) -> Result<f64, ModelError> {
        let (logits, _) = self.forward(batch, mode, exec)?;
        let labels: Vec<f64> = batch.iter().map(|e| e.label_f64()).collect();
        Ok(loss::nll_loss(&logits, &labels)?.0 + self.l2_penalty(batch, l2))
    }

    /// Folds a training-mode batch's statistics into the BN running estimates.
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache) {
        if let (Some(bn), Some(c)) = (self.params.bn.as_mut(), cache.bn.as_ref()) {
            bn.update_running(c);
        }
    }
}

impl Model {
    /// Compares analytic gradients of the training objective on `batch`
    /// against central finite differences, block by block.
    pub fn check_gradients(
        &mut self,
        batch: &[&EncodedExample],
        l2: f64,
        config: GradCheckConfig,
    ) -> Result<GradCheckReport, ModelError> {
        let (_, grads, _) = self.loss_and_grad(batch, l2, Exec::Sequential)?;
        let analytic = grads.to_dense(self);
        let loss = |m: &Model| {
            m.batch_loss(batch, l2, BnMode::Training, Exec::Sequential)
                .unwrap_or(f64::NAN)
        };
        Ok(grad_check(self, &analytic, loss, config)?)
    }
}
