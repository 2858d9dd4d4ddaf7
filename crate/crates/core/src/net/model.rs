use std::collections::HashMap;
use std::sync::Arc;

use crate::autodiff::{Matrix, Real, Tape, Var};
use crate::data::BandStack;
use crate::error::{AomError, Result};
use crate::mape::{kernel_resizers, nearest_index, resize_operator, KernelBank, KernelResizer};
use crate::seed;
use crate::sitok::{
    encoding_rows, extract_patches, index_map, spatial_encoding, ChannelEncoding, PatchKernel, TokenIndex,
};

use super::config::ModelConfig;
use super::params::{trunc_normal, ParamStore};

#[derive(Debug, Clone, Copy)]
struct LinearIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    ln1: NormIds,
    qkv: LinearIds,
    proj: LinearIds,
    ln2: NormIds,
    fc1: LinearIds,
    fc2: LinearIds,
}

#[derive(Debug, Clone)]
struct DecoderIds {
    mask_token: usize,
    embed: LinearIds,
    blocks: Vec<BlockIds>,
    norm: NormIds,
    pred: LinearIds,
}

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    fc1: LinearIds,
    fc2: LinearIds,
}

#[derive(Debug, Clone)]
struct Layout {
    bank: Vec<LinearIds>,
    encoder: Vec<BlockIds>,
    decoders: Vec<DecoderIds>,
    heads: Vec<HeadIds>,
}

struct Builder<'a, T: Real, R: rand::Rng> {
    store: ParamStore<T>,
    rng: &'a mut R,
    std: f64,
}

impl<T: Real, R: rand::Rng> Builder<'_, T, R> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> Result<usize> {
        let m = trunc_normal(self.rng, rows, cols, self.std);
        self.store.insert(name, m)
    }

    fn filled(&mut self, name: String, cols: usize, v: f64) -> Result<usize> {
        self.store.insert(name, Matrix::filled(1, cols, T::from_f64_lossy(v)))
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<LinearIds> {
        Ok(LinearIds {
            w: self.weight(format!("{name}.weight"), fan_in, fan_out)?,
            b: self.filled(format!("{name}.bias"), fan_out, 0.0)?,
        })
    }

    fn norm(&mut self, name: &str, dim: usize) -> Result<NormIds> {
        Ok(NormIds {
            g: self.filled(format!("{name}.gamma"), dim, 1.0)?,
            b: self.filled(format!("{name}.beta"), dim, 0.0)?,
        })
    }

    fn block(&mut self, name: &str, dim: usize, hidden: usize) -> Result<BlockIds> {
        Ok(BlockIds {
            ln1: self.norm(&format!("{name}.ln1"), dim)?,
            qkv: self.linear(&format!("{name}.qkv"), dim, 3 * dim)?,
            proj: self.linear(&format!("{name}.proj"), dim, dim)?,
            ln2: self.norm(&format!("{name}.ln2"), dim)?,
            fc1: self.linear(&format!("{name}.fc1"), dim, hidden)?,
            fc2: self.linear(&format!("{name}.fc2"), hidden, dim)?,
        })
    }
}

fn build_layout<T: Real, R: rand::Rng>(config: &ModelConfig, rng: &mut R) -> Result<(ParamStore<T>, Layout)> {
    let d = config.embed_dim();
    let dec = &config.decoder;
    let mut b = Builder {
        store: ParamStore::new(),
        rng,
        std: config.init_std,
    };
    let bank = config
        .bank_sizes
        .iter()
        .map(|&p| b.linear(&format!("bank.k{p}"), p * p, d))
        .collect::<Result<Vec<_>>>()?;
    let encoder = (0..config.encoder.depth)
        .map(|l| b.block(&format!("encoder.blocks.{l}"), d, config.encoder.mlp_hidden()))
        .collect::<Result<Vec<_>>>()?;
    let mut decoders = Vec::new();
    for (i, &p) in config.scales.iter().enumerate() {
        let name = format!("decoder.{i}");
        decoders.push(DecoderIds {
            mask_token: b.weight(format!("{name}.mask_token"), 1, d)?,
            embed: b.linear(&format!("{name}.embed"), d, dec.decoder_dim)?,
            blocks: (0..dec.depth)
                .map(|l| b.block(&format!("{name}.blocks.{l}"), dec.decoder_dim, dec.mlp_hidden()))
                .collect::<Result<Vec<_>>>()?,
            norm: b.norm(&format!("{name}.norm"), dec.decoder_dim)?,
            pred: b.linear(&format!("{name}.pred"), dec.decoder_dim, p * p)?,
        });
    }
    let heads = (0..config.scales.len())
        .map(|i| {
            Ok(HeadIds {
                fc1: b.linear(&format!("head.{i}.fc1"), d, config.head_dim)?,
                fc2: b.linear(&format!("head.{i}.fc2"), config.head_dim, config.head_dim)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        b.store,
        Layout {
            bank,
            encoder,
            decoders,
            heads,
        },
    ))
}

/// Tokenizer inputs for one image at one patch size, independent of parameters.
#[derive(Debug, Clone)]
pub struct ScaleInput<T> {
    pub patch_size: usize,
    /// `L x P^2` raw pixel patches, also the reconstruction targets.
    pub patches: Matrix<T>,
    /// `L x D` channel plus spatial encodings.
    pub encodings: Matrix<T>,
    pub index_map: Vec<TokenIndex>,
    pub grid_shape: (usize, usize),
    pub channels: usize,
}

impl<T> ScaleInput<T> {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }
}

/// Shared encoder, kernel bank, one decoder and projection head per scale.
#[derive(Clone)]
pub struct AomModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
    resizer: Arc<dyn KernelResizer>,
}

impl<T: Real> std::fmt::Debug for AomModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AomModel")
            .field("config", &self.config)
            .field("num_params", &self.num_params())
            .finish()
    }
}

impl<T: Real> AomModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, &[0x1417]);
        let (params, layout) = build_layout(&config, &mut rng)?;
        let resizer = Arc::from(kernel_resizers().create(&config.resizer)?);
        Ok(Self {
            config,
            params,
            layout,
            resizer,
        })
    }

    /// Rebuilds a model around existing parameters; names and shapes must
    /// match the layout implied by `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(AomError::invalid(format!(
                "parameter count {} does not match model layout {}",
                params.len(),
                model.params.len()
            )));
        }
        for id in 0..params.len() {
            let (want, got) = (model.params.get(id), params.get(id));
            if model.params.name(id) != params.name(id) || want.shape() != got.shape() {
                return Err(AomError::invalid(format!(
                    "parameter {id} is {} {:?}, expected {} {:?}",
                    params.name(id),
                    got.shape(),
                    model.params.name(id),
                    want.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim()
    }

    pub fn num_scales(&self) -> usize {
        self.config.scales.len()
    }

    pub fn cast<U: Real>(&self) -> AomModel<U> {
        AomModel {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            resizer: self.resizer.clone(),
        }
    }

    /// Native kernels as a bank.
    pub fn kernel_bank(&self) -> Result<KernelBank<T>> {
        let kernels = self
            .config
            .bank_sizes
            .iter()
            .zip(&self.layout.bank)
            .map(|(&p, ids)| {
                PatchKernel::new(
                    p,
                    self.params.get(ids.w).clone(),
                    self.params.get(ids.b).row(0).to_vec(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        KernelBank::new(kernels)
    }

    pub fn channel_encoding(&self, stack: &BandStack) -> Result<ChannelEncoding> {
        ChannelEncoding::by_name(&self.config.channel_encoding, stack.profile().clone(), self.embed_dim())
    }

    pub fn prepare(&self, stack: &BandStack, patch_size: usize) -> Result<ScaleInput<T>> {
        let ch = self.channel_encoding(stack)?;
        self.prepare_with(stack, patch_size, &ch)
    }

    pub fn prepare_with(&self, stack: &BandStack, patch_size: usize, ch: &ChannelEncoding) -> Result<ScaleInput<T>> {
        let patches = extract_patches::<T>(stack, patch_size)?;
        let grid_shape = (stack.height() / patch_size, stack.width() / patch_size);
        let sp = spatial_encoding(grid_shape.0, grid_shape.1, self.embed_dim())?;
        let map = index_map(stack.channel_indices(), grid_shape);
        let encodings = encoding_rows::<T>(&map, ch, &sp)?;
        Ok(ScaleInput {
            patch_size,
            patches,
            encodings,
            index_map: map,
            grid_shape,
            channels: stack.channels(),
        })
    }

    pub fn graph(&self) -> Graph<'_, T> {
        Graph {
            tape: Tape::new(),
            model: self,
            bound: vec![None; self.params.len()],
            kernels: HashMap::new(),
        }
    }

    /// Encoder outputs of a full unmasked forward, `L x D`.
    pub fn encode_all(&self, input: &ScaleInput<T>) -> Result<Matrix<T>> {
        let mut g = self.graph();
        let rows: Vec<usize> = (0..input.len()).collect();
        let x = g.embed_rows(input, &rows)?;
        let e = g.encode(x);
        Ok(g.tape.value(e).clone())
    }

    /// Encoder on a given token matrix.
    pub fn encode_matrix(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut g = self.graph();
        let v = g.tape.constant(x.clone());
        let e = g.encode(v);
        g.tape.value(e).clone()
    }

    /// Global average of the encoder outputs of a full unmasked forward.
    pub fn representation(&self, stack: &BandStack, patch_size: usize) -> Result<Vec<T>> {
        let enc = self.encode_all(&self.prepare(stack, patch_size)?)?;
        Ok(mean_rows(&enc))
    }

    /// Projection head `g_i` applied to a pooled vector.
    pub fn project(&self, scale: usize, pooled: &[T]) -> Result<Vec<T>> {
        self.check_scale(scale)?;
        let mut g = self.graph();
        let v = g.tape.constant(Matrix::from_vec(1, pooled.len(), pooled.to_vec()));
        let h = g.head(scale, v);
        Ok(g.tape.value(h).row(0).to_vec())
    }

    fn check_scale(&self, scale: usize) -> Result<()> {
        if scale >= self.num_scales() {
            return Err(AomError::invalid(format!(
                "scale {scale} out of range for {} scales",
                self.num_scales()
            )));
        }
        Ok(())
    }
}

pub fn mean_rows<T: Real>(m: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); m.cols()];
    for r in 0..m.rows() {
        for (o, &v) in out.iter_mut().zip(m.row(r)) {
            *o = *o + v;
        }
    }
    let n = T::from_usize(m.rows().max(1)).unwrap();
    out.iter_mut().for_each(|v| *v = *v / n);
    out
}

/// One forward pass recorded on a tape, with each parameter bound once.
pub struct Graph<'m, T: Real> {
    pub tape: Tape<T>,
    model: &'m AomModel<T>,
    bound: Vec<Option<Var>>,
    kernels: HashMap<usize, (Var, Var)>,
}

impl<'m, T: Real> Graph<'m, T> {
    pub fn model(&self) -> &'m AomModel<T> {
        self.model
    }

    fn p(&mut self, id: usize) -> Var {
        if let Some(v) = self.bound[id] {
            return v;
        }
        let v = self.tape.param(id, self.model.params.get(id));
        self.bound[id] = Some(v);
        v
    }

    fn linear(&mut self, x: Var, ids: LinearIds) -> Var {
        let (w, b) = (self.p(ids.w), self.p(ids.b));
        self.tape.linear(x, w, b)
    }

    fn norm(&mut self, x: Var, ids: NormIds) -> Var {
        let (g, b) = (self.p(ids.g), self.p(ids.b));
        self.tape.layer_norm(x, g, b, self.model.config.encoder.layernorm_eps)
    }

    fn block(&mut self, x: Var, ids: BlockIds, heads: usize) -> Var {
        let h = self.norm(x, ids.ln1);
        let qkv = self.linear(h, ids.qkv);
        let a = self.tape.attention(qkv, heads);
        let a = self.linear(a, ids.proj);
        let x = self.tape.add(x, a);
        let h = self.norm(x, ids.ln2);
        let h = self.linear(h, ids.fc1);
        let h = self.tape.gelu(h);
        let h = self.linear(h, ids.fc2);
        self.tape.add(x, h)
    }

    /// Effective `(weights, bias)` for a target patch size: the nearest native
    /// kernel, resized through a constant operator when sizes differ, so
    /// gradients reach the native weights.
    pub fn kernel(&mut self, patch_size: usize) -> Result<(Var, Var)> {
        if let Some(&k) = self.kernels.get(&patch_size) {
            return Ok(k);
        }
        let sizes = &self.model.config.bank_sizes;
        let i = nearest_index(sizes, patch_size);
        let ids = self.model.layout.bank[i];
        let (w, b) = (self.p(ids.w), self.p(ids.b));
        let w = if sizes[i] == patch_size {
            w
        } else {
            let op = resize_operator(self.model.resizer.as_ref(), sizes[i], patch_size)?.cast::<T>();
            let op = self.tape.constant(op);
            self.tape.matmul(op, w)
        };
        self.kernels.insert(patch_size, (w, b));
        Ok((w, b))
    }

    /// Encoded tokens for the given sequence rows.
    pub fn embed_rows(&mut self, input: &ScaleInput<T>, rows: &[usize]) -> Result<Var> {
        let (w, b) = self.kernel(input.patch_size)?;
        let x = self.tape.constant(input.patches.select_rows(rows));
        let t = self.tape.linear(x, w, b);
        let e = self.tape.constant(input.encodings.select_rows(rows));
        Ok(self.tape.add(t, e))
    }

    pub fn encode(&mut self, x: Var) -> Var {
        let heads = self.model.config.encoder.num_heads;
        let blocks = self.model.layout.encoder.clone();
        blocks.into_iter().fold(x, |x, ids| self.block(x, ids, heads))
    }

    /// Predicted pixel patches for the masked rows, in `mask_idx` order.
    pub fn decode(
        &mut self,
        scale: usize,
        encoded: Var,
        input: &ScaleInput<T>,
        vis_idx: &[usize],
        mask_idx: &[usize],
    ) -> Result<Var> {
        self.model.check_scale(scale)?;
        if vis_idx.len() + mask_idx.len() != input.len() {
            return Err(AomError::shape(format!(
                "mask plan covers {} rows, sequence has {}",
                vis_idx.len() + mask_idx.len(),
                input.len()
            )));
        }
        if input.patch_size != self.model.config.scales[scale] {
            return Err(AomError::shape(format!(
                "decoder {scale} predicts {}-pixel patches, input uses {}",
                self.model.config.scales[scale], input.patch_size
            )));
        }
        let ids = self.model.layout.decoders[scale].clone();
        let mask = self.p(ids.mask_token);
        let full = self
            .tape
            .scatter_rows(encoded, vis_idx.to_vec(), mask, mask_idx.to_vec());
        let mut fill = Matrix::zeros(input.len(), self.model.embed_dim());
        for &r in mask_idx {
            fill.row_mut(r).copy_from_slice(input.encodings.row(r));
        }
        let fill = self.tape.constant(fill);
        let full = self.tape.add(full, fill);
        let mut x = self.linear(full, ids.embed);
        let heads = self.model.config.decoder.num_heads;
        for b in ids.blocks {
            x = self.block(x, b, heads);
        }
        let x = self.tape.gather_rows(x, mask_idx.to_vec());
        let x = self.norm(x, ids.norm);
        Ok(self.linear(x, ids.pred))
    }

    fn head(&mut self, scale: usize, pooled: Var) -> Var {
        let ids = self.model.layout.heads[scale];
        let h = self.linear(pooled, ids.fc1);
        let h = self.tape.gelu(h);
        self.linear(h, ids.fc2)
    }

    /// `g_i(GAP(encoded))`, a `1 x head_dim` row.
    pub fn pool_project(&mut self, scale: usize, encoded: Var) -> Result<Var> {
        self.model.check_scale(scale)?;
        if self.tape.value(encoded).rows() == 0 {
            return Err(AomError::shape("cannot pool zero tokens"));
        }
        let pooled = self.tape.mean_rows(encoded);
        Ok(self.head(scale, pooled))
    }
}
