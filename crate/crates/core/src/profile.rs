//! Exact cost accounting and distributed-training cost models.
//!
//! FLOP counts follow the common table convention: convolution and linear
//! multiply-accumulates times two. Elementwise work (relu, residual add,
//! pooling, logit averaging) is tallied separately and excluded from the
//! headline figure. The shift contributes zero to both, by construction —
//! its cost is data movement, accounted in bytes.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fixture::seeded_tensor;
use crate::model::{walk_shapes, Model, ModelSpec};
use crate::ops;
use crate::shift::{shift_bytes_moved, Fraction, ShiftConfig, ShiftDirection};

/// Cost summary for one model on one input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileReport {
    /// Conv + fc multiply-accumulates, times two.
    pub flops: u64,
    pub params: u64,
    /// Decoded f32 clip bytes per forward.
    pub input_bytes: u64,
    /// Bytes moved by every shift site per forward.
    pub shift_bytes: u64,
    /// `flops / input_bytes`.
    pub compute_io_ratio: f64,
    /// Streaming cache footprint; present only for uni-directional models.
    pub cache_bytes: Option<u64>,
    /// Relu, add, pooling and averaging, one op per element touched.
    pub elementwise_ops: u64,
}

impl ProfileReport {
    pub fn csv_header() -> &'static str {
        "name,flops,params,input_bytes,shift_bytes,compute_io,cache_bytes"
    }

    pub fn to_csv_row(&self, name: &str) -> String {
        let cache = self.cache_bytes.map(|b| b.to_string()).unwrap_or_default();
        format!(
            "{name},{},{},{},{},{:.6},{cache}",
            self.flops, self.params, self.input_bytes, self.shift_bytes, self.compute_io_ratio
        )
    }

    pub fn to_text(&self, name: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {name}\n"));
        out.push_str(&format!("  flops (conv+fc, MACs x2): {}\n", self.flops));
        out.push_str(&format!("  elementwise ops:          {}\n", self.elementwise_ops));
        out.push_str(&format!("  parameters:               {}\n", self.params));
        out.push_str(&format!("  input bytes per clip:     {}\n", self.input_bytes));
        out.push_str(&format!("  shift bytes per clip:     {}\n", self.shift_bytes));
        out.push_str(&format!("  compute/io ratio:         {:.6}\n", self.compute_io_ratio));
        match self.cache_bytes {
            Some(b) => out.push_str(&format!("  stream cache bytes:       {b}\n")),
            None => out.push_str("  stream cache bytes:       n/a (not uni-directional)\n"),
        }
        out
    }
}

/// Network condition and node throughput for the communication model.
#[derive(Clone, Copy, Debug)]
pub struct ClusterModel {
    pub latency_s: f64,
    pub bandwidth_bytes_per_s: f64,
    pub nodes: u32,
    pub per_node_speed_vps: f64,
}

impl ClusterModel {
    pub fn validate(&self) -> Result<()> {
        if self.latency_s <= 0.0
            || self.bandwidth_bytes_per_s <= 0.0
            || self.nodes == 0
            || self.per_node_speed_vps <= 0.0
        {
            return Err(Error::Arg("cluster parameters must all be positive".into()));
        }
        Ok(())
    }
}

pub fn conv2d_flops(c_out: usize, c_in: usize, kh: usize, kw: usize, oh: usize, ow: usize) -> u64 {
    2 * (c_out * c_in * kh * kw * oh * ow) as u64
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FlopBreakdown {
    pub headline: u64,
    pub elementwise: u64,
}

/// Headline FLOPs for a forward over `[N, C, T, H, W]`.
pub fn count_flops(model: &Model, input: [usize; 5]) -> Result<u64> {
    Ok(count_flops_detailed(model, input)?.headline)
}

pub fn count_flops_detailed(model: &Model, input: [usize; 5]) -> Result<FlopBreakdown> {
    let spec = &model.spec;
    let [n, c, t, h, w] = input;
    if c != spec.in_channels {
        return Err(Error::Dim(format!(
            "input has {c} channels, spec expects {}",
            spec.in_channels
        )));
    }
    if t != spec.frames {
        return Err(Error::Dim(format!(
            "input has {t} frames, spec expects {}",
            spec.frames
        )));
    }
    let walk = walk_shapes(spec, h, w, t)?;
    let mut headline = 0u64;
    let mut elementwise = 0u64;

    let stem_rows = (n * t) as u64;
    let stem_plane = (walk.stem_out_h * walk.stem_out_w) as u64;
    headline += stem_rows
        * conv2d_flops(
            spec.stem.out_channels,
            spec.in_channels,
            spec.stem.kernel,
            spec.stem.kernel,
            walk.stem_out_h,
            walk.stem_out_w,
        );
    elementwise += stem_rows * spec.stem.out_channels as u64 * stem_plane; // stem relu

    let mut prev_frames = t;
    for b in &walk.blocks {
        if b.frames != prev_frames {
            // temporal max pool ran between the stages: kernel reads per output
            let pool_elems =
                (n * b.frames * b.c_in * b.h * b.w) as u64 * crate::model::TEMPORAL_POOL_KERNEL as u64;
            elementwise += pool_elems;
            prev_frames = b.frames;
        }
        let rows = (n * b.frames) as u64;
        let oh = ops::conv_out_extent(b.h, 3, b.stride, 1);
        let ow = ops::conv_out_extent(b.w, 3, b.stride, 1);
        headline += rows * conv2d_flops(b.c_out, b.c_in, 3, 3, oh, ow);
        headline += rows * conv2d_flops(b.c_out, b.c_out, 3, 3, oh, ow);
        if b.c_in != b.c_out || b.stride != 1 {
            headline += rows * conv2d_flops(b.c_out, b.c_in, 1, 1, oh, ow);
        }
        // relu after conv1, residual add, post-activation relu
        elementwise += 3 * rows * (b.c_out * oh * ow) as u64;
    }

    let head_rows = (n * walk.head_frames) as u64;
    elementwise += head_rows * (walk.head_channels * walk.head_h * walk.head_w) as u64; // spatial pool
    headline += head_rows * 2 * (spec.num_classes * walk.head_channels) as u64;
    elementwise += (n * walk.head_frames * spec.num_classes) as u64; // logit averaging

    Ok(FlopBreakdown { headline, elementwise })
}

/// Total weight elements.
pub fn count_params(model: &Model) -> u64 {
    model.named_weights().iter().map(|(_, t)| t.len() as u64).sum()
}

/// Weight elements of every 3x3 convolution — the kernels a 2D-to-3D
/// inflation would multiply by `k_T`.
pub fn inflatable_conv_params(model: &Model) -> u64 {
    model
        .named_weights()
        .iter()
        .filter(|(name, t)| name.ends_with(".weight") && t.rank() == 4 && t.dims()[2] == 3 && t.dims()[3] == 3)
        .map(|(_, t)| t.len() as u64)
        .sum()
}

/// Bytes moved by all shift sites for one forward over `input`.
pub fn shift_bytes_total(model: &Model, input: [usize; 5]) -> Result<u64> {
    let Some(cfg) = &model.spec.shift else {
        return Ok(0);
    };
    let [n, _, t, h, w] = input;
    let walk = walk_shapes(&model.spec, h, w, t)?;
    Ok(walk
        .blocks
        .iter()
        .map(|b| shift_bytes_moved([n, b.c_in, b.frames, b.h, b.w], cfg, 4))
        .sum())
}

/// Full cost report for one model on one input shape.
pub fn profile_model(model: &Model, input: [usize; 5]) -> Result<ProfileReport> {
    let breakdown = count_flops_detailed(model, input)?;
    let [n, c, t, h, w] = input;
    let input_bytes = (n * c * t * h * w) as u64 * 4;
    let cache_bytes = match &model.spec.shift {
        Some(cfg) if cfg.direction == ShiftDirection::Unidirectional => {
            let walk = walk_shapes(&model.spec, h, w, t)?;
            Some(
                walk.blocks
                    .iter()
                    .map(|b| (cfg.shifted_channels(b.c_in) * b.h * b.w) as u64 * 4)
                    .sum(),
            )
        }
        _ => None,
    };
    Ok(ProfileReport {
        flops: breakdown.headline,
        params: count_params(model),
        input_bytes,
        shift_bytes: shift_bytes_total(model, input)?,
        compute_io_ratio: breakdown.headline as f64 / input_bytes as f64,
        cache_bytes,
        elementwise_ops: breakdown.elementwise,
    })
}

/// `latency + model_size / bandwidth`, in seconds.
pub fn comm_time(model_bytes: u64, cluster: &ClusterModel) -> f64 {
    cluster.latency_s + model_bytes as f64 / cluster.bandwidth_bytes_per_s
}

/// 2D-to-3D kernel inflation multiplies the affected parameters by the
/// temporal kernel extent.
pub fn inflated_param_count(base_params_of_inflated_convs: u64, k_t: u64) -> u64 {
    assert!(k_t >= 1, "temporal kernel extent must be >= 1");
    base_params_of_inflated_convs * k_t
}

/// Actual-over-ideal training speed under a perfect-overlap model: per step,
/// communication not hidden behind `overlap_fraction` of the compute stalls
/// the node. 1.0 means communication is fully hidden.
pub fn scaling_efficiency(
    cluster: &ClusterModel,
    step_compute_s: f64,
    model_bytes: u64,
    overlap_fraction: f64,
) -> f64 {
    assert!(step_compute_s > 0.0, "step compute time must be positive");
    assert!(
        (0.0..=1.0).contains(&overlap_fraction),
        "overlap fraction must lie in [0, 1]"
    );
    let comm = comm_time(model_bytes, cluster);
    let exposed = (comm - overlap_fraction * step_compute_s).max(0.0);
    step_compute_s / (step_compute_s + exposed)
}

/// One row of the shift-overhead table.
#[derive(Clone, Debug)]
pub struct BenchRow {
    /// Total shifted proportion (both directions combined).
    pub total_fraction: Fraction,
    pub median: Duration,
    pub overhead_pct: f64,
    /// Standard error of the overhead median, so readers can tell a real
    /// ordering from measurement resolution.
    pub overhead_se_pct: f64,
}

/// The proportions measured in the overhead table: the 2D baseline plus
/// partial and full shifts.
pub fn default_bench_fractions() -> Vec<Fraction> {
    [(0, 1), (1, 8), (1, 4), (1, 2), (1, 1)]
        .into_iter()
        .map(|(n, d)| Fraction::new(n, d).unwrap())
        .collect()
}

/// Measure forward latency of the 2D baseline against bi-directional shift
/// variants at the given total shift proportions.
///
/// All variants share the baseline's weights (same seed, identical shapes).
/// Every repeat is one round that times each variant back-to-back in rotated
/// order; a variant's overhead is the median over rounds of its latency
/// increase relative to the baseline *of the same round*, which cancels the
/// machine's slow load drift. The reported latency per variant is the plain
/// median of its samples. Measurement is pinned to a single thread.
pub fn bench_shift_overhead(
    base: &ModelSpec,
    total_fractions: &[Fraction],
    input: [usize; 5],
    repeats: usize,
    warmup: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::Arg("bench repeats must be >= 1".into()));
    }
    if base.shift.is_some() {
        return Err(Error::Arg("bench base spec must be the shift-free 2D baseline".into()));
    }
    let mut fractions = total_fractions.to_vec();
    if fractions.first() != Some(&Fraction::ZERO) {
        fractions.insert(0, Fraction::ZERO);
    }
    let mut models = Vec::with_capacity(fractions.len());
    for &total in &fractions {
        let spec = ModelSpec {
            shift: if total.is_zero() {
                None
            } else {
                Some(ShiftConfig {
                    fraction_per_direction: total.halved(),
                    ..ShiftConfig::default()
                })
            },
            ..base.clone()
        };
        models.push(Model::build(&spec, seed)?);
    }
    let clip = seeded_tensor(seed ^ 0x5eed, &input);

    let prev_threads = ops::threads();
    ops::set_threads(1);
    let count = models.len();
    let mut seconds: Vec<Vec<f64>> = vec![Vec::with_capacity(repeats); count];
    for _ in 0..warmup {
        for model in &models {
            let _ = model.forward_video(&clip)?;
        }
    }
    for round in 0..repeats {
        for i in 0..count {
            let mi = (round + i) % count;
            let start = Instant::now();
            let _ = models[mi].forward_video(&clip)?;
            seconds[mi].push(start.elapsed().as_secs_f64());
        }
    }
    ops::set_threads(prev_threads);

    Ok(fractions
        .iter()
        .enumerate()
        .map(|(mi, &total_fraction)| {
            let lat = median_f64(&seconds[mi]);
            let (overhead_pct, overhead_se_pct) = if total_fraction.is_zero() {
                (0.0, 0.0)
            } else {
                let ratios: Vec<f64> = seconds[mi]
                    .iter()
                    .zip(&seconds[0])
                    .map(|(f, b)| (f - b) / b * 100.0)
                    .collect();
                (median_f64(&ratios), median_se(&ratios))
            };
            BenchRow {
                total_fraction,
                median: Duration::from_secs_f64(lat),
                overhead_pct,
                overhead_se_pct,
            }
        })
        .collect())
}

fn median_f64(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Standard error of the sample median, with spread taken from the
/// interquartile range so latency spikes do not inflate it.
fn median_se(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
    1.2533 * (iqr / 1.349) / (n as f64).sqrt()
}

pub fn bench_csv_header() -> &'static str {
    "fraction,median_latency_ns,overhead_pct"
}

pub fn bench_csv_row(row: &BenchRow) -> String {
    format!(
        "{},{},{:.3}",
        row.total_fraction,
        row.median.as_nanos(),
        row.overhead_pct
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opcount;
    use crate::shift::ShiftPadding;

    fn cluster() -> ClusterModel {
        ClusterModel {
            latency_s: 1e-3,
            bandwidth_bytes_per_s: 1e9,
            nodes: 8,
            per_node_speed_vps: 50.0,
        }
    }

    #[test]
    fn single_conv_flop_formula() {
        assert_eq!(conv2d_flops(1, 1, 3, 3, 4, 4), 288);
    }

    #[test]
    fn tiny_spec_flops_by_hand() {
        let model = Model::build(&ModelSpec::preset_tiny(), 1).unwrap();
        let flops = count_flops(&model, [1, 3, 8, 32, 32]).unwrap();
        // stem 8 frames of 2*8*3*9*32*32; stage0 two 8->8 convs at 32x32;
        // stage1 8->16 stride 2 then 16->16 at 16x16 plus the 1x1 projection;
        // fc 2*10*16 per frame.
        let stem = 8 * conv2d_flops(8, 3, 3, 3, 32, 32);
        let stage0 = 8 * 2 * conv2d_flops(8, 8, 3, 3, 32, 32);
        let stage1 = 8
            * (conv2d_flops(16, 8, 3, 3, 16, 16)
                + conv2d_flops(16, 16, 3, 3, 16, 16)
                + conv2d_flops(16, 8, 1, 1, 16, 16));
        let fc = 8 * 2 * 10 * 16;
        assert_eq!(flops, stem + stage0 + stage1 + fc);
        assert_eq!(flops, 37_095_936);
    }

    #[test]
    fn static_count_matches_runtime_counter() {
        let spec = ModelSpec { shift: Some(ShiftConfig::default()), ..ModelSpec::preset_tiny() };
        let model = Model::build(&spec, 2).unwrap();
        let input = [1usize, 3, 8, 16, 16];
        let clip = seeded_tensor(50, &input);
        let detail = count_flops_detailed(&model, input).unwrap();
        opcount::reset();
        model.forward_video(&clip).unwrap();
        assert_eq!(opcount::current(), detail.headline + detail.elementwise);
    }

    #[test]
    fn static_count_matches_runtime_counter_with_pool() {
        let spec = ModelSpec { temporal_pool: true, ..ModelSpec::preset_tiny() };
        let model = Model::build(&spec, 2).unwrap();
        let input = [1usize, 3, 8, 16, 16];
        let clip = seeded_tensor(51, &input);
        let detail = count_flops_detailed(&model, input).unwrap();
        opcount::reset();
        model.forward_video(&clip).unwrap();
        assert_eq!(opcount::current(), detail.headline + detail.elementwise);
    }

    #[test]
    fn shift_changes_no_flops_or_params() {
        let base = Model::build(&ModelSpec::preset_tiny(), 3).unwrap();
        let spec = ModelSpec { shift: Some(ShiftConfig::default()), ..ModelSpec::preset_tiny() };
        let shifted = Model::build(&spec, 3).unwrap();
        let input = [1, 3, 8, 16, 16];
        assert_eq!(count_flops(&base, input).unwrap(), count_flops(&shifted, input).unwrap());
        assert_eq!(count_params(&base), count_params(&shifted));
        assert_eq!(count_params(&base), 5194);
    }

    #[test]
    fn shift_bytes_sum_over_sites() {
        let spec = ModelSpec { shift: Some(ShiftConfig::default()), ..ModelSpec::preset_tiny() };
        let model = Model::build(&spec, 4).unwrap();
        // Sites: 8ch@32x32 and 8ch@32x32 (block inputs), s=1, bidirectional:
        // 2 * 1 * 1 * 7 * 32 * 32 * 4 bytes each.
        let expect = 2 * (2 * 7 * 32 * 32 * 4);
        assert_eq!(shift_bytes_total(&model, [1, 3, 8, 32, 32]).unwrap(), expect as u64);
        let base = Model::build(&ModelSpec::preset_tiny(), 4).unwrap();
        assert_eq!(shift_bytes_total(&base, [1, 3, 8, 32, 32]).unwrap(), 0);
    }

    #[test]
    fn comm_time_formula() {
        let c = cluster();
        assert_eq!(comm_time(0, &c), 1e-3);
        assert_eq!(comm_time(100_000_000, &c), 1e-3 + 1e8 / 1e9);
        // affine in model size with slope 1/bandwidth
        let d1 = comm_time(2_000_000, &c) - comm_time(1_000_000, &c);
        let d2 = comm_time(3_000_000, &c) - comm_time(2_000_000, &c);
        assert!((d1 - d2).abs() < 1e-15);
        assert!((d1 - 1_000_000.0 / 1e9).abs() < 1e-15);
    }

    #[test]
    fn inflation_scales_inflatable_convs() {
        assert_eq!(inflated_param_count(1000, 3), 3000);
        assert_eq!(inflated_param_count(7, 1), 7);

        let model = Model::build(&ModelSpec::preset_tiny(), 5).unwrap();
        let inflatable = inflatable_conv_params(&model);
        // stem 8*3*9, stage0 two 8*8*9, stage1 16*8*9 and 16*16*9; the 1x1
        // projection and all biases stay 2D.
        assert_eq!(inflatable, 216 + 576 + 576 + 1152 + 2304);
        let total = count_params(&model);
        let inflated_total = total - inflatable + inflated_param_count(inflatable, 3);
        assert_eq!(inflated_total, 5194 - 4824 + 3 * 4824);
    }

    #[test]
    fn scaling_efficiency_properties() {
        let c = cluster();
        // zero communication: ideal
        let free = ClusterModel { latency_s: f64::MIN_POSITIVE, ..c };
        let eff = scaling_efficiency(&free, 1.0, 0, 1.0);
        assert_eq!(eff, 1.0);
        // comm equals compute, no overlap: half speed
        let even = ClusterModel { latency_s: 1.0, bandwidth_bytes_per_s: 1e9, ..c };
        assert_eq!(scaling_efficiency(&even, 1.0, 0, 0.0), 0.5);
        // non-increasing in model size
        let mut last = 2.0;
        for mb in [0u64, 1 << 20, 1 << 24, 1 << 28, 1 << 32] {
            let e = scaling_efficiency(&c, 0.05, mb, 0.5);
            assert!(e > 0.0 && e <= 1.0);
            assert!(e <= last, "efficiency must not grow with model size");
            last = e;
        }
    }

    #[test]
    fn compute_io_rises_when_frames_drop() {
        // With temporal pooling, the post-pool stages run at floor-halved
        // frame counts, so fewer input frames buy proportionally more
        // compute per input byte.
        let mk = |frames| ModelSpec { temporal_pool: true, frames, ..ModelSpec::preset_tiny() };
        let m8 = Model::build(&mk(8), 6).unwrap();
        let m7 = Model::build(&mk(7), 6).unwrap();
        let r8 = profile_model(&m8, [1, 3, 8, 16, 16]).unwrap().compute_io_ratio;
        let r7 = profile_model(&m7, [1, 3, 7, 16, 16]).unwrap().compute_io_ratio;
        assert!(r7 > r8, "{r7} vs {r8}");
    }

    #[test]
    fn report_csv_shape() {
        let spec = ModelSpec {
            shift: Some(ShiftConfig {
                direction: ShiftDirection::Unidirectional,
                padding: ShiftPadding::Zero,
                ..ShiftConfig::default()
            }),
            ..ModelSpec::preset_tiny()
        };
        let model = Model::build(&spec, 7).unwrap();
        let report = profile_model(&model, [1, 3, 8, 32, 32]).unwrap();
        assert!(report.cache_bytes.is_some());
        let row = report.to_csv_row("tiny");
        assert_eq!(row.split(',').count(), 7);
        assert!(row.starts_with("tiny,"));
        assert_eq!(
            ProfileReport::csv_header(),
            "name,flops,params,input_bytes,shift_bytes,compute_io,cache_bytes"
        );
        let base = Model::build(&ModelSpec::preset_tiny(), 7).unwrap();
        let breport = profile_model(&base, [1, 3, 8, 32, 32]).unwrap();
        assert!(breport.to_csv_row("b").ends_with(','), "absent cache is an empty field");
    }

    #[test]
    fn bench_smoke() {
        let rows = bench_shift_overhead(
            &ModelSpec::preset_reference(4),
            &default_bench_fractions(),
            [1, 3, 4, 12, 12],
            3,
            1,
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].overhead_pct, 0.0);
        assert!(rows.iter().all(|r| r.median.as_nanos() > 0));
        // fraction column parses back
        for r in &rows {
            let line = bench_csv_row(r);
            assert_eq!(line.split(',').count(), 3);
        }
    }
}
