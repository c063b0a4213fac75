//! Online per-frame inference with uni-directional shifting.
//!
//! Each shift site keeps a cache of the previous frame's shift-out channels.
//! A step swaps the cache into the incoming feature's first `s` channels and
//! stores the displaced channels for the next frame, so streaming frame by
//! frame reproduces the offline uni-directional forward exactly — at the
//! per-frame compute cost of the plain 2D backbone plus a constant-size
//! cache, independent of how many frames have passed.

use crate::error::{Error, Result};
use crate::model::{block_branches, walk_shapes, Model};
use crate::ops;
use crate::shift::{ShiftConfig, ShiftDirection, ShiftPlacement};
use crate::tensor::Tensor;

/// Mutable per-stream state over an immutable model. One state owns one
/// logical stream; run distinct states in parallel for concurrent streams.
pub struct StreamState<'m> {
    model: &'m Model,
    /// One entry per shift site (residual block); `None` when the site
    /// shifts zero channels. Dims `[1, s_i, H_i, W_i]`.
    caches: Vec<Option<Tensor>>,
    frame_count: u64,
    /// Sum of all per-frame logits emitted so far, `[1, num_classes]`.
    accumulator: Tensor,
    input_h: usize,
    input_w: usize,
}

impl<'m> StreamState<'m> {
    /// Zero-filled caches (equivalent to zero padding before the first
    /// frame), for a uni-directional model fed `input_h x input_w` frames.
    pub fn init(model: &'m Model, input_h: usize, input_w: usize) -> Result<Self> {
        let cfg = stream_config(model)?;
        if model.spec.temporal_pool {
            return Err(Error::Config(
                "temporal pooling conflicts with single-frame steps; use offline mode".into(),
            ));
        }
        let walk = walk_shapes(&model.spec, input_h, input_w, model.spec.frames)?;
        let caches = walk
            .blocks
            .iter()
            .map(|b| {
                let s = cfg.shifted_channels(b.c_in);
                if s == 0 {
                    Ok(None)
                } else {
                    Tensor::zeros(&[1, s, b.h, b.w]).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StreamState {
            model,
            caches,
            frame_count: 0,
            accumulator: Tensor::zeros(&[1, model.spec.num_classes])?,
            input_h,
            input_w,
        })
    }

    /// Feed one frame (`[1, C, H, W]` or `[1, C, 1, H, W]`) and return its
    /// logits `[1, num_classes]`.
    pub fn step(&mut self, frame: &Tensor) -> Result<Tensor> {
        let folded = match frame.rank() {
            4 => frame.clone(),
            5 => {
                let (n, c, t, h, w) = frame.dims5()?;
                if n != 1 || t != 1 {
                    return Err(Error::Dim(format!(
                        "stream frame must be a single frame, got dims {:?}",
                        frame.dims()
                    )));
                }
                frame.reshape(&[1, c, h, w])?
            }
            r => return Err(Error::Dim(format!("stream frame must be rank 4 or 5, got {r}"))),
        };
        let (n, c, h, w) = folded.dims4()?;
        if n != 1 || c != self.model.spec.in_channels || h != self.input_h || w != self.input_w {
            return Err(Error::Dim(format!(
                "frame dims [{n}, {c}, {h}, {w}] do not match the stream's [1, {}, {}, {}]",
                self.model.spec.in_channels, self.input_h, self.input_w
            )));
        }
        let cfg = stream_config(self.model)?;

        let mut act = ops::relu(&ops::conv2d(
            &folded,
            &self.model.stem.weight,
            Some(&self.model.stem.bias),
            self.model.stem.stride,
            self.model.stem.pad,
        )?);
        let mut site = 0;
        for stage in &self.model.stages {
            for block in stage {
                act = step_block(block, &act, &mut self.caches[site], cfg.placement)?;
                site += 1;
            }
        }
        let pooled = ops::spatial_avg_pool(&act)?;
        let logits = ops::fully_connected(&pooled, &self.model.fc.weight, &self.model.fc.bias)?;

        // Running-average bookkeeping, not model arithmetic: kept out of the
        // op counter so a step's count equals the plain per-frame forward.
        for (acc, &v) in self.accumulator.data_mut().iter_mut().zip(logits.data()) {
            *acc += v;
        }
        self.frame_count += 1;
        Ok(logits)
    }

    /// Mean of all per-frame logits so far.
    pub fn running_prediction(&self) -> Result<Tensor> {
        if self.frame_count == 0 {
            return Err(Error::Empty("running_prediction before any frame".into()));
        }
        let inv = 1.0 / self.frame_count as f64;
        let data = self
            .accumulator
            .data()
            .iter()
            .map(|&v| (v as f64 * inv) as f32)
            .collect();
        Tensor::new(self.accumulator.dims().to_vec(), data)
    }

    /// Total cache footprint: sum over sites of `s_i * H_i * W_i * 4` bytes.
    pub fn cache_bytes(&self) -> u64 {
        self.caches
            .iter()
            .flatten()
            .map(|t| t.len() as u64 * 4)
            .sum()
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn caches(&self) -> &[Option<Tensor>] {
        &self.caches
    }
}

fn stream_config(model: &Model) -> Result<&ShiftConfig> {
    let cfg = model.spec.shift.as_ref().ok_or_else(|| {
        Error::Config("streaming needs a uni-directional shift config".into())
    })?;
    if cfg.direction != ShiftDirection::Unidirectional {
        return Err(Error::Config(
            "bi-directional models need future frames; streaming requires unidirectional".into(),
        ));
    }
    if cfg.padding != crate::shift::ShiftPadding::Zero {
        return Err(Error::Config(
            "circulant padding is undefined before the first frame; streaming requires zero padding"
                .into(),
        ));
    }
    Ok(cfg)
}

/// Swap the cache into the first `s` channels (cache out -> feature in,
/// displaced channels -> cache), then run the block. Pure data movement.
fn step_block(
    block: &crate::model::ResidualBlock,
    act: &Tensor,
    cache: &mut Option<Tensor>,
    placement: ShiftPlacement,
) -> Result<Tensor> {
    let swapped = match cache {
        None => None,
        Some(cached) => {
            let (_, s, h, w) = cached.dims4()?;
            let span = s * h * w;
            let mut main_in = act.clone();
            let mut outgoing = cached.clone();
            outgoing.data_mut().copy_from_slice(&act.data()[..span]);
            main_in.data_mut()[..span].copy_from_slice(cached.data());
            *cache = Some(outgoing);
            Some(main_in)
        }
    };
    match (&swapped, placement) {
        (Some(sw), ShiftPlacement::Residual) => block_branches(block, sw, act),
        (Some(sw), ShiftPlacement::InPlace) => block_branches(block, sw, sw),
        (None, _) => block_branches(block, act, act),
    }
}
