//! Residual 2D backbone with per-block temporal shifting.
//!
//! A model is a stem convolution, stages of basic residual blocks, a global
//! pool and a linear classifier. Frames run through every 2D kernel folded
//! into the batch axis; the only places the temporal axis is touched are the
//! shift at each block entry and the optional temporal max pool between the
//! first and second stage. Batch normalization is deliberately omitted: at
//! inference it folds into the convolutions.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixture::unit_f32;
use crate::io;
use crate::ops;
use crate::shift::{ShiftConfig, ShiftPlacement, temporal_shift_folded};
use crate::tensor::{fold_time, unfold_time, Tensor};

pub const TEMPORAL_POOL_KERNEL: usize = 3;
pub const TEMPORAL_POOL_STRIDE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    pub channels: usize,
    pub spatial_stride_of_first_block: usize,
}

/// Declarative backbone description. Serializes to JSON with these exact
/// field names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftConfig>,
    #[serde(default)]
    pub temporal_pool: bool,
    pub frames: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.stem.out_channels == 0
            || self.stem.kernel == 0
            || self.stem.stride == 0
            || self.num_classes == 0
            || self.frames == 0
        {
            return Err(Error::Arg("model spec extents must be positive".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Arg("model spec needs at least one stage".into()));
        }
        for st in &self.stages {
            if st.blocks == 0 || st.channels == 0 || st.spatial_stride_of_first_block == 0 {
                return Err(Error::Arg("stage extents must be positive".into()));
            }
        }
        if self.temporal_pool {
            if self.frames < 3 {
                return Err(Error::Arg("temporal_pool requires frames >= 3".into()));
            }
            if self.stages.len() < 2 {
                return Err(Error::Arg(
                    "temporal_pool sits between stage 1 and stage 2, so two stages are required"
                        .into(),
                ));
            }
        }
        if let Some(cfg) = &self.shift {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Small two-stage fixture used by tests and `make-fixture`.
    pub fn preset_tiny() -> ModelSpec {
        ModelSpec {
            in_channels: 3,
            stem: StemSpec { out_channels: 8, kernel: 3, stride: 1, pad: 1 },
            stages: vec![
                StageSpec { blocks: 1, channels: 8, spatial_stride_of_first_block: 1 },
                StageSpec { blocks: 1, channels: 16, spatial_stride_of_first_block: 2 },
            ],
            num_classes: 10,
            shift: None,
            temporal_pool: false,
            frames: 8,
        }
    }

    /// Reference backbone for the shift-overhead bench. Strided convolutions
    /// keep the compute per block low while each shift still moves the
    /// block's full-resolution input, so the data-movement cost of shifting
    /// is visible against the convolution time. 16-wide stages guarantee at
    /// least one shifted channel at the smallest bench fraction.
    pub fn preset_reference(frames: usize) -> ModelSpec {
        ModelSpec {
            in_channels: 3,
            stem: StemSpec { out_channels: 16, kernel: 3, stride: 2, pad: 1 },
            stages: vec![
                StageSpec { blocks: 1, channels: 16, spatial_stride_of_first_block: 2 },
                StageSpec { blocks: 1, channels: 16, spatial_stride_of_first_block: 2 },
            ],
            num_classes: 16,
            shift: None,
            temporal_pool: false,
            frames,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    /// 1x1 strided projection on the identity path when the block changes
    /// channel count or spatial stride.
    pub projection: Option<ConvLayer>,
}

#[derive(Clone, Debug)]
pub struct FcLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub stem: ConvLayer,
    pub stages: Vec<Vec<ResidualBlock>>,
    pub fc: FcLayer,
}

/// A sampled clip: `[1, C, T, H, W]` plus the source indices it was drawn from.
#[derive(Clone, Debug)]
pub struct Clip {
    pub tensor: Tensor,
    pub frame_indices: Vec<usize>,
}

/// Static per-block geometry, shared by profiling and stream-cache sizing.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockShape {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub stride: usize,
    /// Frames alive at this block (halved by the temporal pool, if any).
    pub frames: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct ShapeWalk {
    pub blocks: Vec<BlockShape>,
    pub head_channels: usize,
    pub head_h: usize,
    pub head_w: usize,
    pub head_frames: usize,
    pub stem_out_h: usize,
    pub stem_out_w: usize,
}

pub(crate) fn walk_shapes(spec: &ModelSpec, h_in: usize, w_in: usize, frames: usize) -> Result<ShapeWalk> {
    spec.validate()?;
    let mut h = ops::conv_out_extent(h_in, spec.stem.kernel, spec.stem.stride, spec.stem.pad);
    let mut w = ops::conv_out_extent(w_in, spec.stem.kernel, spec.stem.stride, spec.stem.pad);
    let stem_out_h = h;
    let stem_out_w = w;
    let mut c = spec.stem.out_channels;
    let mut t = frames;
    let mut blocks = Vec::new();
    for (si, stage) in spec.stages.iter().enumerate() {
        if spec.temporal_pool && si == 1 {
            t = ops::pooled_frames(t, TEMPORAL_POOL_KERNEL, TEMPORAL_POOL_STRIDE)
                .ok_or_else(|| Error::Dim("temporal pool kernel exceeds frame count".into()))?;
        }
        for bi in 0..stage.blocks {
            let stride = if bi == 0 { stage.spatial_stride_of_first_block } else { 1 };
            blocks.push(BlockShape { c_in: c, h, w, c_out: stage.channels, stride, frames: t });
            c = stage.channels;
            h = ops::conv_out_extent(h, 3, stride, 1);
            w = ops::conv_out_extent(w, 3, stride, 1);
        }
    }
    Ok(ShapeWalk {
        blocks,
        head_channels: c,
        head_h: h,
        head_w: w,
        head_frames: t,
        stem_out_h,
        stem_out_w,
    })
}

fn uniform_tensor(rng: &mut ChaCha8Rng, dims: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt() as f32;
    let numel: usize = dims.iter().product();
    let data = (0..numel)
        .map(|_| (unit_f32(rng) * 2.0 - 1.0) * bound)
        .collect();
    Tensor::new(dims.to_vec(), data).expect("valid init dims")
}

/// Expected weight entries for a spec: `(name, dims, fan_in)` in build order.
/// Shift configuration never appears here — the shift has no parameters.
fn weight_plan(spec: &ModelSpec) -> Vec<(String, Vec<usize>, usize)> {
    let mut plan = Vec::new();
    let k = spec.stem.kernel;
    let mut conv = |name: String, c_out: usize, c_in: usize, kh: usize, kw: usize| {
        let fan_in = c_in * kh * kw;
        plan.push((format!("{name}.weight"), vec![c_out, c_in, kh, kw], fan_in));
        plan.push((format!("{name}.bias"), vec![c_out], fan_in));
    };
    conv("stem".into(), spec.stem.out_channels, spec.in_channels, k, k);
    let mut c = spec.stem.out_channels;
    for (si, stage) in spec.stages.iter().enumerate() {
        for bi in 0..stage.blocks {
            let stride = if bi == 0 { stage.spatial_stride_of_first_block } else { 1 };
            let prefix = format!("stage{si}.block{bi}");
            conv(format!("{prefix}.conv1"), stage.channels, c, 3, 3);
            conv(format!("{prefix}.conv2"), stage.channels, stage.channels, 3, 3);
            if c != stage.channels || stride != 1 {
                conv(format!("{prefix}.proj"), stage.channels, c, 1, 1);
            }
            c = stage.channels;
        }
    }
    plan.push(("fc.weight".into(), vec![spec.num_classes, c], c));
    plan.push(("fc.bias".into(), vec![spec.num_classes], c));
    plan
}

impl Model {
    /// Build with deterministic weights: uniform in `[-b, b]` with
    /// `b = sqrt(1/fan_in)`, drawn from a ChaCha8 stream seeded by `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for (name, dims, fan_in) in weight_plan(spec) {
            tensors.push((name, uniform_tensor(&mut rng, &dims, fan_in)));
        }
        Model::assemble(spec.clone(), tensors)
    }

    /// Realize a model from archive entries; every expected entry must be
    /// present with matching dims, and nothing extra may remain.
    pub fn from_entries(spec: &ModelSpec, mut entries: Vec<(String, Tensor)>) -> Result<Model> {
        spec.validate()?;
        let plan = weight_plan(spec);
        let mut ordered = Vec::with_capacity(plan.len());
        for (name, dims, _) in &plan {
            let pos = entries
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Load(format!("archive is missing '{name}'")))?;
            let (_, tensor) = entries.swap_remove(pos);
            if tensor.dims() != dims.as_slice() {
                return Err(Error::Load(format!(
                    "'{name}' has dims {:?}, spec expects {:?}",
                    tensor.dims(),
                    dims
                )));
            }
            ordered.push((name.clone(), tensor));
        }
        if let Some((extra, _)) = entries.first() {
            return Err(Error::Load(format!("archive has unexpected entry '{extra}'")));
        }
        Model::assemble(spec.clone(), ordered)
    }

    pub fn load_archive<R: Read>(spec: &ModelSpec, reader: &mut R) -> Result<Model> {
        Model::from_entries(spec, io::read_weights(reader)?)
    }

    pub fn write_archive<W: Write>(&self, writer: &mut W) -> Result<()> {
        let named: Vec<(String, &Tensor)> = self
            .named_weights()
            .into_iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        io::write_weights(writer, &named)
    }

    fn assemble(spec: ModelSpec, tensors: Vec<(String, Tensor)>) -> Result<Model> {
        let mut it = tensors.into_iter();
        let mut next = |expect: &str| -> Result<Tensor> {
            let (name, t) = it
                .next()
                .ok_or_else(|| Error::Load(format!("missing weight '{expect}'")))?;
            debug_assert_eq!(name, expect);
            Ok(t)
        };
        let stem = ConvLayer {
            weight: next("stem.weight")?,
            bias: next("stem.bias")?,
            stride: spec.stem.stride,
            pad: spec.stem.pad,
        };
        let mut stages = Vec::new();
        let mut c = spec.stem.out_channels;
        for (si, stage) in spec.stages.iter().enumerate() {
            let mut blocks = Vec::new();
            for bi in 0..stage.blocks {
                let stride = if bi == 0 { stage.spatial_stride_of_first_block } else { 1 };
                let prefix = format!("stage{si}.block{bi}");
                let conv1 = ConvLayer {
                    weight: next(&format!("{prefix}.conv1.weight"))?,
                    bias: next(&format!("{prefix}.conv1.bias"))?,
                    stride,
                    pad: 1,
                };
                let conv2 = ConvLayer {
                    weight: next(&format!("{prefix}.conv2.weight"))?,
                    bias: next(&format!("{prefix}.conv2.bias"))?,
                    stride: 1,
                    pad: 1,
                };
                let projection = if c != stage.channels || stride != 1 {
                    Some(ConvLayer {
                        weight: next(&format!("{prefix}.proj.weight"))?,
                        bias: next(&format!("{prefix}.proj.bias"))?,
                        stride,
                        pad: 0,
                    })
                } else {
                    None
                };
                blocks.push(ResidualBlock { conv1, conv2, projection });
                c = stage.channels;
            }
            stages.push(blocks);
        }
        let fc = FcLayer { weight: next("fc.weight")?, bias: next("fc.bias")? };
        Ok(Model { spec, stem, stages, fc })
    }

    /// Weights in build order, named `stem.*`, `stage{i}.block{j}.*`, `fc.*`.
    pub fn named_weights(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        out.push(("stem.weight".to_string(), &self.stem.weight));
        out.push(("stem.bias".to_string(), &self.stem.bias));
        for (si, stage) in self.stages.iter().enumerate() {
            for (bi, block) in stage.iter().enumerate() {
                let prefix = format!("stage{si}.block{bi}");
                out.push((format!("{prefix}.conv1.weight"), &block.conv1.weight));
                out.push((format!("{prefix}.conv1.bias"), &block.conv1.bias));
                out.push((format!("{prefix}.conv2.weight"), &block.conv2.weight));
                out.push((format!("{prefix}.conv2.bias"), &block.conv2.bias));
                if let Some(proj) = &block.projection {
                    out.push((format!("{prefix}.proj.weight"), &proj.weight));
                    out.push((format!("{prefix}.proj.bias"), &proj.bias));
                }
            }
        }
        out.push(("fc.weight".to_string(), &self.fc.weight));
        out.push(("fc.bias".to_string(), &self.fc.bias));
        out
    }

    /// Run the backbone, returning the folded final feature map
    /// `[N*T', C_last, H', W']` and the remaining frame count `T'`.
    pub fn forward_features(&self, x: &Tensor) -> Result<(Tensor, usize)> {
        let (n, c, t, _, _) = x.dims5()?;
        if c != self.spec.in_channels {
            return Err(Error::Dim(format!(
                "input has {c} channels, spec expects {}",
                self.spec.in_channels
            )));
        }
        if t != self.spec.frames {
            return Err(Error::Dim(format!(
                "input has {t} frames, spec expects {}",
                self.spec.frames
            )));
        }
        let folded = fold_time(x)?;
        self.forward_features_folded(&folded, n, t)
    }

    fn forward_features_folded(&self, folded: &Tensor, clips: usize, frames: usize) -> Result<(Tensor, usize)> {
        let mut act = ops::relu(&ops::conv2d(
            folded,
            &self.stem.weight,
            Some(&self.stem.bias),
            self.stem.stride,
            self.stem.pad,
        )?);
        let mut t_cur = frames;
        for (si, stage) in self.stages.iter().enumerate() {
            if self.spec.temporal_pool && si == 1 {
                let pooled = temporal_max_pool_folded(
                    &act,
                    clips,
                    t_cur,
                    TEMPORAL_POOL_KERNEL,
                    TEMPORAL_POOL_STRIDE,
                )?;
                act = pooled.0;
                t_cur = pooled.1;
            }
            for block in stage {
                act = block_forward_folded(block, &act, clips, t_cur, self.spec.shift.as_ref())?;
            }
        }
        Ok((act, t_cur))
    }

    /// Per-frame logits `[N, T', K]`: spatial average pool then the linear
    /// classifier, one row per remaining frame.
    pub fn forward_frame_logits(&self, x: &Tensor) -> Result<Tensor> {
        let (n, ..) = x.dims5()?;
        let (features, t_cur) = self.forward_features(x)?;
        let pooled = ops::spatial_avg_pool(&features)?;
        let logits = ops::fully_connected(&pooled, &self.fc.weight, &self.fc.bias)?;
        logits.reshape(&[n, t_cur, self.spec.num_classes])
    }

    /// Clip-level logits `[N, K]`: the per-frame logits averaged over the
    /// remaining frames.
    pub fn forward_video(&self, x: &Tensor) -> Result<Tensor> {
        let per_frame = self.forward_frame_logits(x)?;
        let [n, t, k] = *per_frame.dims() else { unreachable!() };
        let mut out = Vec::with_capacity(n * k);
        for ni in 0..n {
            for ki in 0..k {
                let mut sum = 0.0f64;
                for ti in 0..t {
                    sum += per_frame.data()[(ni * t + ti) * k + ki] as f64;
                }
                out.push((sum / t as f64) as f32);
            }
        }
        crate::opcount::record((n * t * k) as u64);
        Tensor::new(vec![n, k], out)
    }

    /// Number of shift sites: one per residual block.
    pub fn num_shift_sites(&self) -> usize {
        self.stages.iter().map(|s| s.len()).sum()
    }
}

/// Offline inference over a sampled clip: averaged logits `[1, num_classes]`.
pub fn forward_offline(model: &Model, clip: &Clip) -> Result<Tensor> {
    model.forward_video(&clip.tensor)
}

/// One residual block over a 5D activation, applying the configured shift
/// at its entry. With residual placement the identity path sees the
/// unshifted input; with in-place placement both paths see the shifted one.
pub fn residual_block_forward(
    block: &ResidualBlock,
    x: &Tensor,
    shift: Option<&ShiftConfig>,
) -> Result<Tensor> {
    let (n, _, t, _, _) = x.dims5()?;
    let folded = fold_time(x)?;
    let out = block_forward_folded(block, &folded, n, t, shift)?;
    unfold_time(&out, t)
}

fn block_forward_folded(
    block: &ResidualBlock,
    act: &Tensor,
    clips: usize,
    frames: usize,
    shift: Option<&ShiftConfig>,
) -> Result<Tensor> {
    let (_, c, _, _) = act.dims4()?;
    let shifted = match shift {
        Some(cfg) if cfg.shifted_channels(c) > 0 => {
            Some(temporal_shift_folded(act, clips, frames, cfg)?)
        }
        _ => None,
    };
    let (main_in, identity_in) = match (&shifted, shift.map(|c| c.placement)) {
        (Some(sh), Some(ShiftPlacement::Residual)) => (sh, act),
        (Some(sh), Some(ShiftPlacement::InPlace)) => (sh, sh),
        _ => (act, act),
    };
    block_branches(block, main_in, identity_in)
}

/// Main branch (conv-relu-conv) plus identity/projection, joined by the
/// post-activation. The caller decides which activation each branch sees.
pub(crate) fn block_branches(
    block: &ResidualBlock,
    main_in: &Tensor,
    identity_in: &Tensor,
) -> Result<Tensor> {
    let mut main = ops::conv2d(
        main_in,
        &block.conv1.weight,
        Some(&block.conv1.bias),
        block.conv1.stride,
        block.conv1.pad,
    )?;
    main = ops::relu(&main);
    main = ops::conv2d(
        &main,
        &block.conv2.weight,
        Some(&block.conv2.bias),
        block.conv2.stride,
        block.conv2.pad,
    )?;
    let identity = match &block.projection {
        Some(proj) => ops::conv2d(identity_in, &proj.weight, Some(&proj.bias), proj.stride, proj.pad)?,
        None => identity_in.clone(),
    };
    Ok(ops::relu(&ops::add(&main, &identity)?))
}

/// Temporal max pool on a folded activation; returns the new tensor and the
/// reduced frame count.
pub(crate) fn temporal_max_pool_folded(
    act: &Tensor,
    clips: usize,
    frames: usize,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor, usize)> {
    let (rows, c, h, w) = act.dims4()?;
    if rows != clips * frames {
        return Err(Error::Dim(format!(
            "{rows} folded rows do not split into {clips} clips x {frames} frames"
        )));
    }
    let t_out = ops::pooled_frames(frames, kernel, stride)
        .ok_or_else(|| Error::Dim("temporal pool kernel exceeds frame count".into()))?;
    let row_len = c * h * w;
    let mut out = vec![f32::NEG_INFINITY; clips * t_out * row_len];
    for ni in 0..clips {
        for to in 0..t_out {
            let dst = &mut out[(ni * t_out + to) * row_len..(ni * t_out + to + 1) * row_len];
            let start = (to * stride) as isize - 1;
            for ti in start..start + kernel as isize {
                if ti < 0 || ti >= frames as isize {
                    continue;
                }
                let src = &act.data()
                    [(ni * frames + ti as usize) * row_len..(ni * frames + ti as usize + 1) * row_len];
                for (d, &s) in dst.iter_mut().zip(src) {
                    if s > *d {
                        *d = s;
                    }
                }
            }
        }
    }
    crate::opcount::record((clips * t_out * row_len * kernel) as u64);
    Ok((Tensor::new(vec![clips * t_out, c, h, w], out)?, t_out))
}

/// Segment-center frame sampling: split `[0, T_raw)` into `frames` equal
/// segments and take each segment's center, `floor((i + 0.5) * T_raw / frames)`.
pub fn sample_frames(video: &Tensor, frames: usize) -> Result<Clip> {
    if frames == 0 {
        return Err(Error::Arg("frame count must be positive".into()));
    }
    let (n, c, t_raw, h, w) = video.dims5()?;
    if n != 1 {
        return Err(Error::Dim("sample_frames expects a single clip".into()));
    }
    let indices: Vec<usize> = (0..frames)
        .map(|i| ((2 * i + 1) * t_raw / (2 * frames)).min(t_raw - 1))
        .collect();
    let plane = h * w;
    let mut data = Vec::with_capacity(c * frames * plane);
    for ci in 0..c {
        for &src_t in &indices {
            let base = (ci * t_raw + src_t) * plane;
            data.extend_from_slice(&video.data()[base..base + plane]);
        }
    }
    Ok(Clip {
        tensor: Tensor::new(vec![1, c, frames, h, w], data)?,
        frame_indices: indices,
    })
}
