//! Attentional encoder-decoder with a bi-LSTM token encoder, an optional
//! bi-LSTM character encoder, a two-stage conditional LSTM decoder and
//! dot-product attention over each encoder.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seqio::{BOS, PAD};

use super::config::{Channel, EncoderMode, ModelConfig};
use super::data::{Example, FrozenEmbeddings, SourceIds, Vocabs};
use super::ops::{
    attend_back, attend_unchecked, char_cnn_token, gemm_tn_acc, log_softmax, lstm_step, lstm_step_back, mv_acc, vm_acc,
    CnnTrace, LstmStep,
};
use super::params::{Layout, SlotId, SlotKind, Tensors};
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmIds {
    wx: SlotId,
    wh: SlotId,
    b: SlotId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Ids {
    word: Option<SlotId>,
    cnn_chars: Option<SlotId>,
    cnn_banks: Vec<(SlotId, SlotId)>,
    tags: Vec<SlotId>,
    sent_chars: Option<SlotId>,
    /// `[encoder][layer] -> (forward, backward)`.
    encoders: Vec<Vec<(LstmIds, LstmIds)>>,
    init_w: SlotId,
    init_b: SlotId,
    target: SlotId,
    dec1: LstmIds,
    dec2: LstmIds,
    query: Vec<SlotId>,
    post_w: SlotId,
    post_b: SlotId,
    out_w: SlotId,
    out_b: SlotId,
}

fn add_lstm(l: &mut Layout, name: &str, input: usize, hidden: usize) -> LstmIds {
    LstmIds {
        wx: l.add(format!("{name}.wx"), input, 4 * hidden, SlotKind::Weight),
        wh: l.add(format!("{name}.wh"), hidden, 4 * hidden, SlotKind::Weight),
        b: l.add(format!("{name}.b"), 1, 4 * hidden, SlotKind::GateBias),
    }
}

fn build_layout(cfg: &ModelConfig, vocabs: &Vocabs, frozen_dim: usize) -> (Layout, Ids, usize) {
    let h = cfg.hidden_size;
    let mut l = Layout::default();
    let mut source_dim = 0;
    let mut word = None;
    let mut cnn_chars = None;
    let mut cnn_banks = Vec::new();
    let mut tags = Vec::new();
    for ch in cfg.ordered_channels() {
        match ch {
            Channel::Word => {
                word = Some(l.add("emb.word", vocabs.word.len(), cfg.word_dim, SlotKind::Embedding));
                source_dim += cfg.word_dim;
            }
            Channel::File => source_dim += frozen_dim,
            Channel::CharCnn => {
                let cc = &cfg.char_cnn;
                cnn_chars = Some(l.add(
                    "emb.cnn_char",
                    vocabs.chars.len(),
                    cc.char_embedding_dim,
                    SlotKind::Embedding,
                ));
                for &w in &cc.widths {
                    cnn_banks.push((
                        l.add(
                            format!("cnn.w{w}"),
                            w * cc.char_embedding_dim,
                            cc.filters_per_width,
                            SlotKind::Weight,
                        ),
                        l.add(format!("cnn.b{w}"), 1, cc.filters_per_width, SlotKind::Bias),
                    ));
                }
                source_dim += cc.output_dim();
            }
            Channel::Tag(name) => {
                tags.push(l.add(
                    format!("emb.tag.{name}"),
                    vocabs.tags[&name].len(),
                    cfg.tag_dim,
                    SlotKind::Embedding,
                ));
                source_dim += cfg.tag_dim;
            }
        }
    }
    let mut sent_chars = None;
    let mut inputs = vec![source_dim];
    if cfg.encoders == EncoderMode::Two {
        sent_chars = Some(l.add(
            "emb.sent_char",
            vocabs.chars.len(),
            cfg.char_cnn.char_embedding_dim,
            SlotKind::Embedding,
        ));
        inputs.push(cfg.char_cnn.char_embedding_dim);
    }
    let mut encoders = Vec::new();
    for (e, &input) in inputs.iter().enumerate() {
        let mut layers = Vec::new();
        for layer in 0..cfg.encoder_layers {
            let din = if layer == 0 { input } else { 2 * h };
            layers.push((
                add_lstm(&mut l, &format!("enc{e}.l{layer}.fwd"), din, h),
                add_lstm(&mut l, &format!("enc{e}.l{layer}.bwd"), din, h),
            ));
        }
        encoders.push(layers);
    }
    let n = encoders.len();
    let init_w = l.add("dec.init.w", 2 * h * n, h, SlotKind::Weight);
    let init_b = l.add("dec.init.b", 1, h, SlotKind::Bias);
    let target = l.add(
        "emb.target",
        vocabs.target.len(),
        cfg.target_embedding_dim,
        SlotKind::Embedding,
    );
    let dec1 = add_lstm(&mut l, "dec.lstm1", cfg.target_embedding_dim, h);
    let query = (0..n)
        .map(|e| l.add(format!("dec.att{e}.q"), h, 2 * h, SlotKind::Weight))
        .collect();
    let dec2 = add_lstm(&mut l, "dec.lstm2", 2 * h * n, h);
    let post_w = l.add("dec.post.w", h, h, SlotKind::Weight);
    let post_b = l.add("dec.post.b", 1, h, SlotKind::Bias);
    let out_w = l.add("dec.out.w", h, vocabs.target.len(), SlotKind::Weight);
    let out_b = l.add("dec.out.b", 1, vocabs.target.len(), SlotKind::Bias);
    let ids = Ids {
        word,
        cnn_chars,
        cnn_banks,
        tags,
        sent_chars,
        encoders,
        init_w,
        init_b,
        target,
        dec1,
        dec2,
        query,
        post_w,
        post_b,
        out_w,
        out_b,
    };
    (l, ids, source_dim)
}

/// Bi-LSTM states (one row per position, forward half first) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub states: Array2<f64>,
    pub context: Array1<f64>,
}

/// Decoder recurrent state: hidden vector `d_j` and cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: DecoderState,
    pub log_probs: Vec<f64>,
    /// Attention weights per encoder.
    pub attention: Vec<Vec<f64>>,
}

struct LayerTrace {
    input: Array2<f64>,
    fwd: Vec<LstmStep>,
    bwd: Vec<LstmStep>,
}

struct StepTrace {
    input: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    s1: LstmStep,
    queries: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    s2: LstmStep,
    post: Vec<f64>,
    log_probs: Vec<f64>,
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sampling policy for the previous-token input during training.
#[derive(Debug, Clone, Copy)]
pub struct Feeding {
    pub sample_prob: f64,
    pub seed: u64,
}

impl Feeding {
    pub const TEACHER: Feeding = Feeding {
        sample_prob: 0.0,
        seed: 0,
    };
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub layout: Layout,
    pub params: Tensors,
    pub frozen: Option<FrozenEmbeddings>,
    pub(crate) ids: Ids,
    source_dim: usize,
}

impl Model {
    pub fn new(config: ModelConfig, vocabs: Vocabs, frozen: Option<FrozenEmbeddings>) -> Result<Model, NeuralError> {
        config.validate()?;
        if config.has(&Channel::File) && frozen.is_none() {
            return Err(NeuralError::MissingEmbeddingTable);
        }
        for t in config.tag_channels() {
            if !vocabs.tags.contains_key(&t) {
                return Err(NeuralError::MissingTags { channel: t });
            }
        }
        let frozen_dim = frozen.as_ref().map_or(0, |f| f.dim);
        let (layout, ids, source_dim) = build_layout(&config, &vocabs, frozen_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Tensors::init(&layout, config.init_scale, &mut rng);
        Ok(Model {
            config,
            vocabs,
            layout,
            params,
            frozen,
            ids,
            source_dim,
        })
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn num_params(&self) -> usize {
        self.layout.size
    }

    fn w(&self, id: SlotId) -> ArrayView2<'_, f64> {
        self.params.view(&self.layout, id)
    }

    fn b(&self, id: SlotId) -> &[f64] {
        self.params.slice(&self.layout, id)
    }

    /// Char-CNN features, one row per token.
    pub fn char_cnn_embed(&self, chars: &[Vec<usize>]) -> Result<Array2<f64>, NeuralError> {
        Ok(self.char_cnn_traced(chars)?.0)
    }

    fn char_cnn_traced(&self, chars: &[Vec<usize>]) -> Result<(Array2<f64>, Vec<CnnTrace>), NeuralError> {
        let table = self.ids.cnn_chars.ok_or(NeuralError::ChannelDisabled("char-cnn"))?;
        let cc = &self.config.char_cnn;
        let banks: Vec<_> = self
            .ids
            .cnn_banks
            .iter()
            .map(|&(w, b)| (self.w(w), self.w(b)))
            .collect();
        let mut out = Array2::zeros((chars.len(), cc.output_dim()));
        let mut traces = Vec::with_capacity(chars.len());
        for (i, token) in chars.iter().enumerate() {
            if token.is_empty() {
                return Err(NeuralError::EmptyToken { index: i });
            }
            let (feats, trace) = char_cnn_token(token, self.w(table), &cc.widths, &banks, PAD);
            out.row_mut(i).assign(&Array1::from(feats));
            traces.push(trace);
        }
        Ok((out, traces))
    }

    /// Per-token concatenation of the active channels.
    pub fn embed_source(&self, src: &SourceIds) -> Result<Array2<f64>, NeuralError> {
        Ok(self.embed_traced(src)?.0)
    }

    fn embed_traced(&self, src: &SourceIds) -> Result<(Array2<f64>, Vec<CnnTrace>), NeuralError> {
        let n = src.len();
        if n == 0 {
            return Err(NeuralError::EmptySequence);
        }
        let mut out = Array2::zeros((n, self.source_dim));
        let mut col = 0;
        let mut traces = Vec::new();
        let mut tag_k = 0;
        for ch in self.config.ordered_channels() {
            match ch {
                Channel::Word => {
                    let (id, d) = (self.ids.word.unwrap(), self.config.word_dim);
                    for (i, &w) in src.words.iter().enumerate() {
                        out.slice_mut(s![i, col..col + d]).assign(&self.w(id).row(w));
                    }
                    col += d;
                }
                Channel::File => {
                    let f = self.frozen.as_ref().ok_or(NeuralError::MissingEmbeddingTable)?;
                    for (i, t) in src.tokens.iter().enumerate() {
                        out.slice_mut(s![i, col..col + f.dim])
                            .assign(&Array1::from(f.vector(t)));
                    }
                    col += f.dim;
                }
                Channel::CharCnn => {
                    let (feats, tr) = self.char_cnn_traced(&src.chars)?;
                    let d = feats.ncols();
                    out.slice_mut(s![.., col..col + d]).assign(&feats);
                    traces = tr;
                    col += d;
                }
                Channel::Tag(_) => {
                    let (id, d) = (self.ids.tags[tag_k], self.config.tag_dim);
                    let row = src.tags.get(tag_k).ok_or(NeuralError::MissingTags {
                        channel: format!("#{tag_k}"),
                    })?;
                    if row.len() != n {
                        return Err(NeuralError::DimensionMismatch {
                            what: "tag channel length",
                            expected: n,
                            got: row.len(),
                        });
                    }
                    for (i, &t) in row.iter().enumerate() {
                        out.slice_mut(s![i, col..col + d]).assign(&self.w(id).row(t));
                    }
                    tag_k += 1;
                    col += d;
                }
            }
        }
        Ok((out, traces))
    }

    fn sentence_char_embed(&self, src: &SourceIds) -> Result<Array2<f64>, NeuralError> {
        let id = self
            .ids
            .sent_chars
            .ok_or(NeuralError::ChannelDisabled("character encoder"))?;
        if src.sentence_chars.is_empty() {
            return Err(NeuralError::EmptySequence);
        }
        let table = self.w(id);
        let mut out = Array2::zeros((src.sentence_chars.len(), table.ncols()));
        for (i, &c) in src.sentence_chars.iter().enumerate() {
            out.row_mut(i).assign(&table.row(c));
        }
        Ok(out)
    }

    fn run_lstm(&self, ids: LstmIds, x: ArrayView2<f64>, reverse: bool) -> Vec<LstmStep> {
        let h = self.config.hidden_size;
        let mut xw = x.dot(&self.w(ids.wx));
        xw += &self.w(ids.b);
        let wh = self.w(ids.wh);
        let len = x.nrows();
        let mut steps: Vec<Option<LstmStep>> = vec![None; len];
        let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
        for k in 0..len {
            let pos = if reverse { len - 1 - k } else { k };
            let mut z = xw.row(pos).to_vec();
            vm_acc(&hp, wh, &mut z);
            let st = lstm_step(z, &cp);
            hp.clone_from(&st.h);
            cp.clone_from(&st.c);
            steps[pos] = Some(st);
        }
        steps.into_iter().map(Option::unwrap).collect()
    }

    fn encode_traced(&self, which: usize, emb: Array2<f64>) -> (EncoderOutput, Vec<LayerTrace>) {
        let h = self.config.hidden_size;
        let mut input = emb;
        let mut traces = Vec::new();
        for &(f, b) in &self.ids.encoders[which] {
            let fwd = self.run_lstm(f, input.view(), false);
            let bwd = self.run_lstm(b, input.view(), true);
            let mut out = Array2::zeros((input.nrows(), 2 * h));
            for i in 0..input.nrows() {
                out.slice_mut(s![i, ..h]).assign(&Array1::from(fwd[i].h.clone()));
                out.slice_mut(s![i, h..]).assign(&Array1::from(bwd[i].h.clone()));
            }
            traces.push(LayerTrace { input, fwd, bwd });
            input = out;
        }
        let context = input.mean_axis(Axis(0)).unwrap();
        (EncoderOutput { states: input, context }, traces)
    }

    /// Runs encoder `which` (0: tokens, 1: sentence characters) over its
    /// input embeddings.
    pub fn encode(&self, embeddings: Array2<f64>, which: usize) -> Result<EncoderOutput, NeuralError> {
        let layers = self.ids.encoders.get(which).ok_or(NeuralError::DimensionMismatch {
            what: "encoder index",
            expected: self.ids.encoders.len(),
            got: which,
        })?;
        if embeddings.nrows() == 0 {
            return Err(NeuralError::EmptySequence);
        }
        let din = self.layout.slots[layers[0].0.wx].rows;
        if embeddings.ncols() != din {
            return Err(NeuralError::DimensionMismatch {
                what: "encoder input",
                expected: din,
                got: embeddings.ncols(),
            });
        }
        Ok(self.encode_traced(which, embeddings).0)
    }

    /// Embeds and encodes a source sentence with every configured encoder.
    pub fn encode_source(&self, src: &SourceIds) -> Result<Vec<EncoderOutput>, NeuralError> {
        let mut outs = vec![self.encode(self.embed_source(src)?, 0)?];
        if self.config.encoders == EncoderMode::Two {
            outs.push(self.encode(self.sentence_char_embed(src)?, 1)?);
        }
        Ok(outs)
    }

    /// `d0 = tanh(W_init [c_1; ...] + b)` with a zero cell.
    pub fn init_decoder(&self, contexts: &[&[f64]]) -> Result<DecoderState, NeuralError> {
        let h = self.config.hidden_size;
        if contexts.len() != self.ids.encoders.len() || contexts.iter().any(|c| c.len() != 2 * h) {
            return Err(NeuralError::DimensionMismatch {
                what: "decoder init contexts",
                expected: 2 * h * self.ids.encoders.len(),
                got: contexts.iter().map(|c| c.len()).sum(),
            });
        }
        let cat: Vec<f64> = contexts.concat();
        let mut pre = self.b(self.ids.init_b).to_vec();
        vm_acc(&cat, self.w(self.ids.init_w), &mut pre);
        Ok(DecoderState {
            h: pre.iter().map(|v| v.tanh()).collect(),
            c: vec![0.0; h],
        })
    }

    pub fn initial_state(&self, enc: &[EncoderOutput]) -> Result<DecoderState, NeuralError> {
        let ctx: Vec<&[f64]> = enc.iter().map(|e| e.context.as_slice().unwrap()).collect();
        self.init_decoder(&ctx)
    }

    fn step_traced(&self, enc: &[EncoderOutput], state: &DecoderState, input: usize) -> StepTrace {
        let ids = &self.ids;
        let h = self.config.hidden_size;
        let e = self.params.row(&self.layout, ids.target, input);
        let mut z1 = self.b(ids.dec1.b).to_vec();
        vm_acc(e, self.w(ids.dec1.wx), &mut z1);
        vm_acc(&state.h, self.w(ids.dec1.wh), &mut z1);
        let s1 = lstm_step(z1, &state.c);
        let mut queries = Vec::new();
        let mut weights = Vec::new();
        let mut ctx = Vec::with_capacity(2 * h * enc.len());
        for (k, out) in enc.iter().enumerate() {
            let mut q = vec![0.0; 2 * h];
            vm_acc(&s1.h, self.w(ids.query[k]), &mut q);
            let (a, w) = attend_unchecked(out.states.view(), &q);
            ctx.extend_from_slice(&a);
            queries.push(q);
            weights.push(w);
        }
        let mut z2 = self.b(ids.dec2.b).to_vec();
        vm_acc(&ctx, self.w(ids.dec2.wx), &mut z2);
        vm_acc(&s1.h, self.w(ids.dec2.wh), &mut z2);
        let s2 = lstm_step(z2, &s1.c);
        let mut post = self.b(ids.post_b).to_vec();
        vm_acc(&s2.h, self.w(ids.post_w), &mut post);
        post.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = self.b(ids.out_b).to_vec();
        vm_acc(&post, self.w(ids.out_w), &mut logits);
        StepTrace {
            input,
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            s1,
            queries,
            weights,
            ctx,
            s2,
            post,
            log_probs: log_softmax(&logits),
        }
    }

    /// One decoder step from `state` given the previous target token id.
    pub fn decode_step(
        &self,
        enc: &[EncoderOutput],
        state: &DecoderState,
        prev_token: usize,
    ) -> Result<StepOutput, NeuralError> {
        let h = self.config.hidden_size;
        if enc.len() != self.ids.encoders.len() {
            return Err(NeuralError::DimensionMismatch {
                what: "encoder outputs",
                expected: self.ids.encoders.len(),
                got: enc.len(),
            });
        }
        if state.h.len() != h || state.c.len() != h || enc.iter().any(|e| e.states.ncols() != 2 * h) {
            return Err(NeuralError::DimensionMismatch {
                what: "decoder state",
                expected: h,
                got: state.h.len(),
            });
        }
        if prev_token >= self.vocabs.target.len() {
            return Err(NeuralError::DimensionMismatch {
                what: "target token id",
                expected: self.vocabs.target.len(),
                got: prev_token,
            });
        }
        let t = self.step_traced(enc, state, prev_token);
        Ok(StepOutput {
            state: DecoderState { h: t.s2.h, c: t.s2.c },
            log_probs: t.log_probs,
            attention: t.weights,
        })
    }

    /// Summed token loss of one example; adds its gradient into `grads`
    /// when given. Returns `(loss, target tokens)`.
    pub fn example_loss(
        &self,
        ex: &Example,
        feeding: Feeding,
        grads: Option<&mut Tensors>,
    ) -> Result<(f64, usize), NeuralError> {
        let ids = &self.ids;
        let h = self.config.hidden_size;
        let (emb, cnn_traces) = self.embed_traced(&ex.source)?;
        let (out0, tr0) = self.encode_traced(0, emb);
        let mut enc = vec![out0];
        let mut enc_traces = vec![tr0];
        if self.config.encoders == EncoderMode::Two {
            let (o, t) = self.encode_traced(1, self.sentence_char_embed(&ex.source)?);
            enc.push(o);
            enc_traces.push(t);
        }
        let cat: Vec<f64> = enc.iter().flat_map(|e| e.context.iter().cloned()).collect();
        let state0 = self.initial_state(&enc)?;

        let v = self.vocabs.target.len();
        let smooth = self.config.label_smoothing;
        let mut rng = ChaCha8Rng::seed_from_u64(feeding.seed);
        let mut state = state0.clone();
        let mut steps: Vec<StepTrace> = Vec::with_capacity(ex.target.len());
        // compensated summation keeps finite-difference checks above the
        // rounding noise of a long sum
        let mut loss = Neumaier::default();
        for j in 0..ex.target.len() {
            let input = if j == 0 {
                BOS
            } else if feeding.sample_prob > 0.0 && rng.random_bool(feeding.sample_prob) {
                super::ops::argmax(&steps[j - 1].log_probs)
            } else {
                ex.target[j - 1]
            };
            let st = self.step_traced(&enc, &state, input);
            let gold = ex.target[j];
            loss.add(-(1.0 - smooth) * st.log_probs[gold]);
            if smooth > 0.0 {
                loss.add(-smooth / v as f64 * st.log_probs.iter().sum::<f64>());
            }
            state = DecoderState {
                h: st.s2.h.clone(),
                c: st.s2.c.clone(),
            };
            steps.push(st);
        }
        let loss = loss.total();
        if !loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss {
                detail: format!("example with {} source tokens", ex.source.len()),
            });
        }
        let Some(grads) = grads else {
            return Ok((loss, ex.target.len()));
        };

        let l = &self.layout;
        let t_len = steps.len();
        // output projection and post layer, batched over steps
        let mut dlogits = Array2::<f64>::zeros((t_len, v));
        let mut post = Array2::<f64>::zeros((t_len, h));
        let mut dstate = Array2::<f64>::zeros((t_len, h));
        for (j, st) in steps.iter().enumerate() {
            let mut row = dlogits.row_mut(j);
            for (k, lp) in st.log_probs.iter().enumerate() {
                row[k] = lp.exp() - smooth / v as f64;
            }
            row[ex.target[j]] -= 1.0 - smooth;
            post.row_mut(j).assign(&Array1::from(st.post.clone()));
            dstate.row_mut(j).assign(&Array1::from(st.s2.h.clone()));
        }
        gemm_tn_acc(post.view(), dlogits.view(), &mut grads.view_mut(l, ids.out_w));
        grads
            .view_mut(l, ids.out_b)
            .row_mut(0)
            .scaled_add(1.0, &dlogits.sum_axis(Axis(0)));
        let mut dpost = dlogits.dot(&self.w(ids.out_w).t());
        dpost.zip_mut_with(&post, |d, o| *d *= 1.0 - o * o);
        gemm_tn_acc(dstate.view(), dpost.view(), &mut grads.view_mut(l, ids.post_w));
        grads
            .view_mut(l, ids.post_b)
            .row_mut(0)
            .scaled_add(1.0, &dpost.sum_axis(Axis(0)));
        let d_out = dpost.dot(&self.w(ids.post_w).t());

        // recurrent part, step by step
        let n_enc = enc.len();
        let mut dz1_all = Array2::<f64>::zeros((t_len, 4 * h));
        let mut dz2_all = Array2::<f64>::zeros((t_len, 4 * h));
        let mut x1 = Array2::<f64>::zeros((t_len, self.config.target_embedding_dim));
        let mut h1prev = Array2::<f64>::zeros((t_len, h));
        let mut x2 = Array2::<f64>::zeros((t_len, 2 * h * n_enc));
        let mut dprime = Array2::<f64>::zeros((t_len, h));
        let mut att_w: Vec<Array2<f64>> = enc.iter().map(|e| Array2::zeros((t_len, e.states.nrows()))).collect();
        let mut att_ds = att_w.clone();
        let mut att_q: Vec<Array2<f64>> = (0..n_enc).map(|_| Array2::zeros((t_len, 2 * h))).collect();
        let mut att_dq = att_q.clone();
        let mut att_da = att_q.clone();
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for j in (0..t_len).rev() {
            let st = &steps[j];
            let dh: Vec<f64> = d_out.row(j).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dz2, dc1) = lstm_step_back(&st.s2, &st.s1.c, &dh, &dc_next);
            let mut da = vec![0.0; 2 * h * n_enc];
            mv_acc(self.w(ids.dec2.wx), &dz2, &mut da);
            let mut dd1 = vec![0.0; h];
            mv_acc(self.w(ids.dec2.wh), &dz2, &mut dd1);
            for k in 0..n_enc {
                let da_k = &da[2 * h * k..2 * h * (k + 1)];
                let (ds, dq) = attend_back(enc[k].states.view(), &st.weights[k], da_k);
                mv_acc(self.w(ids.query[k]), &dq, &mut dd1);
                att_w[k].row_mut(j).assign(&Array1::from(st.weights[k].clone()));
                att_ds[k].row_mut(j).assign(&Array1::from(ds));
                att_q[k].row_mut(j).assign(&Array1::from(st.queries[k].clone()));
                att_dq[k].row_mut(j).assign(&Array1::from(dq));
                att_da[k].row_mut(j).assign(&Array1::from(da_k.to_vec()));
            }
            let (dz1, dc0) = lstm_step_back(&st.s1, &st.c_prev, &dd1, &dc1);
            dh_next.fill(0.0);
            mv_acc(self.w(ids.dec1.wh), &dz1, &mut dh_next);
            dc_next = dc0;
            dz1_all.row_mut(j).assign(&Array1::from(dz1));
            dz2_all.row_mut(j).assign(&Array1::from(dz2));
            x1.row_mut(j).assign(&self.w(ids.target).row(st.input));
            h1prev.row_mut(j).assign(&Array1::from(st.h_prev.clone()));
            x2.row_mut(j).assign(&Array1::from(st.ctx.clone()));
            dprime.row_mut(j).assign(&Array1::from(st.s1.h.clone()));
        }
        self.acc_lstm(grads, ids.dec2, x2.view(), dprime.view(), dz2_all.view());
        self.acc_lstm(grads, ids.dec1, x1.view(), h1prev.view(), dz1_all.view());
        let dx1 = dz1_all.dot(&self.w(ids.dec1.wx).t());
        for (j, st) in steps.iter().enumerate() {
            let row = grads.row_mut(l, ids.target, st.input);
            for (g, d) in row.iter_mut().zip(dx1.row(j)) {
                *g += d;
            }
        }
        let mut d_states: Vec<Array2<f64>> = Vec::with_capacity(n_enc);
        for k in 0..n_enc {
            gemm_tn_acc(dprime.view(), att_dq[k].view(), &mut grads.view_mut(l, ids.query[k]));
            let mut dc = att_w[k].t().dot(&att_da[k]);
            dc += &att_ds[k].t().dot(&att_q[k]);
            d_states.push(dc);
        }

        // decoder initialization
        let dpre: Vec<f64> = dh_next.iter().zip(&state0.h).map(|(g, d)| g * (1.0 - d * d)).collect();
        {
            let mut gw = grads.view_mut(l, ids.init_w);
            for (r, &c) in cat.iter().enumerate() {
                gw.row_mut(r).scaled_add(c, &ndarray::ArrayView1::from(&dpre[..]));
            }
        }
        for (g, d) in grads.row_mut(l, ids.init_b, 0).iter_mut().zip(&dpre) {
            *g += d;
        }
        let mut dcat = vec![0.0; cat.len()];
        mv_acc(self.w(ids.init_w), &dpre, &mut dcat);
        for k in 0..n_enc {
            let len = d_states[k].nrows() as f64;
            let dctx = Array1::from(dcat[2 * h * k..2 * h * (k + 1)].to_vec()) / len;
            for mut row in d_states[k].rows_mut() {
                row += &dctx;
            }
        }

        // encoders
        let mut d_states = d_states.into_iter();
        for (k, traces) in enc_traces.iter().enumerate() {
            let mut d = d_states.next().unwrap();
            for (layer, tr) in traces.iter().enumerate().rev() {
                let (f, b) = self.ids.encoders[k][layer];
                let mut dx = self.back_lstm(grads, f, tr, &tr.fwd, d.slice(s![.., ..h]), false);
                dx += &self.back_lstm(grads, b, tr, &tr.bwd, d.slice(s![.., h..]), true);
                d = dx;
            }
            if k == 0 {
                self.back_embed(grads, &ex.source, &cnn_traces, d.view());
            } else {
                let id = self.ids.sent_chars.unwrap();
                for (i, &c) in ex.source.sentence_chars.iter().enumerate() {
                    for (g, v) in grads.row_mut(l, id, c).iter_mut().zip(d.row(i)) {
                        *g += v;
                    }
                }
            }
        }
        Ok((loss, ex.target.len()))
    }

    fn acc_lstm(
        &self,
        grads: &mut Tensors,
        ids: LstmIds,
        x: ArrayView2<f64>,
        hprev: ArrayView2<f64>,
        dz: ArrayView2<f64>,
    ) {
        let l = &self.layout;
        gemm_tn_acc(x, dz, &mut grads.view_mut(l, ids.wx));
        gemm_tn_acc(hprev, dz, &mut grads.view_mut(l, ids.wh));
        grads
            .view_mut(l, ids.b)
            .row_mut(0)
            .scaled_add(1.0, &dz.sum_axis(Axis(0)));
    }

    /// Backward through one direction of a bi-LSTM layer; returns the input
    /// gradient.
    fn back_lstm(
        &self,
        grads: &mut Tensors,
        ids: LstmIds,
        tr: &LayerTrace,
        steps: &[LstmStep],
        d_out: ArrayView2<f64>,
        reverse: bool,
    ) -> Array2<f64> {
        let h = self.config.hidden_size;
        let len = steps.len();
        let wh = self.w(ids.wh);
        let mut dz_all = Array2::<f64>::zeros((len, 4 * h));
        let mut hprev = Array2::<f64>::zeros((len, h));
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        for k in (0..len).rev() {
            let pos = if reverse { len - 1 - k } else { k };
            let prev = if k == 0 {
                None
            } else {
                Some(if reverse { pos + 1 } else { pos - 1 })
            };
            let c_prev = prev.map_or(&zeros[..], |p| &steps[p].c[..]);
            let dh: Vec<f64> = d_out.row(pos).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dz, dc_prev) = lstm_step_back(&steps[pos], c_prev, &dh, &dc_next);
            dh_next.fill(0.0);
            mv_acc(wh, &dz, &mut dh_next);
            dc_next = dc_prev;
            if let Some(p) = prev {
                hprev.row_mut(pos).assign(&Array1::from(steps[p].h.clone()));
            }
            dz_all.row_mut(pos).assign(&Array1::from(dz));
        }
        self.acc_lstm(grads, ids, tr.input.view(), hprev.view(), dz_all.view());
        dz_all.dot(&self.w(ids.wx).t())
    }

    fn back_embed(&self, grads: &mut Tensors, src: &SourceIds, cnn: &[CnnTrace], d: ArrayView2<f64>) {
        let l = &self.layout;
        let mut col = 0;
        let mut tag_k = 0;
        for ch in self.config.ordered_channels() {
            match ch {
                Channel::Word => {
                    let (id, dim) = (self.ids.word.unwrap(), self.config.word_dim);
                    for (i, &w) in src.words.iter().enumerate() {
                        for (g, v) in grads.row_mut(l, id, w).iter_mut().zip(d.slice(s![i, col..col + dim])) {
                            *g += v;
                        }
                    }
                    col += dim;
                }
                Channel::File => col += self.frozen.as_ref().map_or(0, |f| f.dim),
                Channel::CharCnn => {
                    let cc = &self.config.char_cnn;
                    let table = self.ids.cnn_chars.unwrap();
                    let dim = cc.char_embedding_dim;
                    let nf = cc.filters_per_width;
                    for (i, tr) in cnn.iter().enumerate() {
                        for (k, &(wid, bid)) in self.ids.cnn_banks.iter().enumerate() {
                            let dout = d.slice(s![i, col + k * nf..col + (k + 1) * nf]);
                            let positions = tr.ngrams[k].nrows();
                            let mut g = Array2::<f64>::zeros((positions, nf));
                            for (f, &p) in tr.argmax[k].iter().enumerate() {
                                g[[p, f]] = dout[f];
                            }
                            gemm_tn_acc(tr.ngrams[k].view(), g.view(), &mut grads.view_mut(l, wid));
                            grads.view_mut(l, bid).row_mut(0).scaled_add(1.0, &dout);
                            let dn = g.dot(&self.w(wid).t());
                            let w = cc.widths[k];
                            for p in 0..positions {
                                for j in 0..w {
                                    let c = tr.padded[k][p + j];
                                    let src_row = dn.slice(s![p, j * dim..(j + 1) * dim]);
                                    for (gv, v) in grads.row_mut(l, table, c).iter_mut().zip(src_row) {
                                        *gv += v;
                                    }
                                }
                            }
                        }
                    }
                    col += cc.output_dim();
                }
                Channel::Tag(_) => {
                    let (id, dim) = (self.ids.tags[tag_k], self.config.tag_dim);
                    for (i, &t) in src.tags[tag_k].iter().enumerate() {
                        for (g, v) in grads.row_mut(l, id, t).iter_mut().zip(d.slice(s![i, col..col + dim])) {
                            *g += v;
                        }
                    }
                    tag_k += 1;
                    col += dim;
                }
            }
        }
    }
}
