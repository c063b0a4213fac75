//! Class activation mapping.
//!
//! The classifier head is `fc(pool(features))`; dropping the pool and
//! applying the fc weights at every spatio-temporal position instead turns
//! the same parameters into a per-position class salience map. Averaging
//! that map back over all positions recovers the model's logits, which is
//! the correctness anchor for the whole procedure.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{Clip, Model};
use crate::ops;
use crate::tensor::Tensor;

/// Salience of every class over the input clip's geometry.
#[derive(Clone, Debug)]
pub struct CamMap {
    /// `[1, num_classes, T, H_in, W_in]`, resized to the clip.
    pub raw: Tensor,
    /// Argmax of the model's pooled logits.
    pub predicted_class: usize,
    /// Foreground mask `[1, T, H_in, W_in]` for the predicted class,
    /// thresholded to keep ~20% of the pixels.
    pub mask: Tensor,
}

/// Per-position logits `[1, num_classes, T', h, w]`: the fc layer applied as
/// a 1x1x1 convolution over the last conv features, pooling removed.
pub fn cam_logits(model: &Model, clip: &Clip) -> Result<Tensor> {
    let (n, ..) = clip.tensor.dims5()?;
    if n != 1 {
        return Err(Error::Dim("cam_logits expects a single clip".into()));
    }
    let (features, t_cur) = model.forward_features(&clip.tensor)?;
    let (rows, c, h, w) = features.dims4()?;
    debug_assert_eq!(rows, t_cur);
    let (k, wc) = model.fc.weight.dims2()?;
    if wc != c {
        return Err(Error::Dim(format!(
            "fc expects {wc} channels, features have {c}"
        )));
    }
    let plane = h * w;
    let mut out = vec![0.0f32; k * t_cur * plane];
    for ti in 0..t_cur {
        let feat = &features.data()[ti * c * plane..(ti + 1) * c * plane];
        for ki in 0..k {
            let wrow = &model.fc.weight.data()[ki * c..(ki + 1) * c];
            let bias = model.fc.bias.data()[ki];
            let dst = &mut out[(ki * t_cur + ti) * plane..(ki * t_cur + ti + 1) * plane];
            dst.fill(bias);
            for (ci, &wv) in wrow.iter().enumerate() {
                let src = &feat[ci * plane..(ci + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        }
    }
    crate::opcount::record(2 * (k * c * t_cur * plane) as u64);
    Tensor::new(vec![1, k, t_cur, h, w], out)
}

/// Resize one class slice to the clip geometry: bilinear over space,
/// nearest/replication over time.
fn resize_to_input(cam: &Tensor, class_id: usize, out_t: usize, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, k, t_in, h, w) = cam.dims5()?;
    if class_id >= k {
        return Err(Error::Arg(format!("class {class_id} out of {k}")));
    }
    let plane_in = h * w;
    let slice = Tensor::new(
        vec![1, 1, t_in, h, w],
        cam.data()[class_id * t_in * plane_in..(class_id + 1) * t_in * plane_in].to_vec(),
    )?;
    let spatial = ops::bilinear_resize_spatial(&slice, out_h, out_w)?;
    let plane = out_h * out_w;
    let mut out = vec![0.0f32; out_t * plane];
    for to in 0..out_t {
        let src_t = (to * t_in / out_t).min(t_in - 1);
        out[to * plane..(to + 1) * plane]
            .copy_from_slice(&spatial.data()[src_t * plane..(src_t + 1) * plane]);
    }
    Tensor::new(vec![1, 1, out_t, out_h, out_w], out)
}

/// Threshold below which a value is background: the k-th largest value with
/// `k = round(keep_fraction * len)`. `None` when k rounds to zero.
pub fn quantile_threshold(values: &[f32], keep_fraction: f64) -> Result<Option<f32>> {
    if !(0.0..1.0).contains(&keep_fraction) || keep_fraction == 0.0 {
        return Err(Error::Arg(format!(
            "keep_fraction must lie in (0, 1), got {keep_fraction}"
        )));
    }
    let keep = (keep_fraction * values.len() as f64).round() as usize;
    if keep == 0 {
        return Ok(None);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite cam values"));
    Ok(Some(sorted[keep - 1]))
}

/// Binary foreground mask for one class: resize its salience to
/// `(T, H, W)` and keep the top `keep_fraction` of values; ties at the
/// threshold are included in the foreground.
pub fn cam_mask(
    cam: &Tensor,
    class_id: usize,
    out_dims: (usize, usize, usize),
    keep_fraction: f64,
) -> Result<Tensor> {
    let (out_t, out_h, out_w) = out_dims;
    let resized = resize_to_input(cam, class_id, out_t, out_h, out_w)?;
    let mask = match quantile_threshold(resized.data(), keep_fraction)? {
        Some(threshold) => resized
            .data()
            .iter()
            .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
            .collect(),
        None => vec![0.0; resized.len()],
    };
    Tensor::new(vec![1, out_t, out_h, out_w], mask)
}

/// Full dissection of one clip: per-class salience resized to the input,
/// the predicted class, and its foreground mask.
pub fn dissect(model: &Model, clip: &Clip, keep_fraction: f64) -> Result<CamMap> {
    let (_, _, t, h, w) = clip.tensor.dims5()?;
    let cam = cam_logits(model, clip)?;
    let logits = crate::model::forward_offline(model, clip)?;
    let predicted_class = argmax(logits.data());

    let (_, k, ..) = cam.dims5()?;
    let plane = t * h * w;
    let mut raw = Vec::with_capacity(k * plane);
    for ki in 0..k {
        let slice = resize_to_input(&cam, ki, t, h, w)?;
        raw.extend_from_slice(slice.data());
    }
    let raw = Tensor::new(vec![1, k, t, h, w], raw)?;
    let mask = cam_mask(&cam, predicted_class, (t, h, w), keep_fraction)?;
    Ok(CamMap { raw, predicted_class, mask })
}

/// Index of the largest value; first index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One 8-bit PGM per frame (foreground 255, background 0), named
/// `{stem}_t{frame:03}.pgm` inside `dir`.
pub fn write_mask_pgms(mask: &Tensor, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let [_, t, h, w] = *mask.dims() else {
        return Err(Error::Dim(format!("mask must be rank 4, got {:?}", mask.dims())));
    };
    let mut paths = Vec::with_capacity(t);
    for ti in 0..t {
        let pixels: Vec<u8> = mask.data()[ti * h * w..(ti + 1) * h * w]
            .iter()
            .map(|&v| if v > 0.5 { 255 } else { 0 })
            .collect();
        let path = dir.join(format!("{stem}_t{ti:03}.pgm"));
        io::write_pgm(&path, w, h, &pixels)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::seeded_tensor;
    use crate::model::{sample_frames, ModelSpec};
    use crate::shift::ShiftConfig;

    fn tiny_model(seed: u64) -> Model {
        let spec = ModelSpec { shift: Some(ShiftConfig::default()), ..ModelSpec::preset_tiny() };
        Model::build(&spec, seed).unwrap()
    }

    fn tiny_clip(seed: u64) -> Clip {
        let video = seeded_tensor(seed, &[1, 3, 8, 16, 16]);
        sample_frames(&video, 8).unwrap()
    }

    #[test]
    fn pooled_cam_recovers_logits() {
        let model = tiny_model(1);
        let clip = tiny_clip(60);
        let cam = cam_logits(&model, &clip).unwrap();
        let pooled = ops::global_avg_pool(&cam).unwrap();
        let logits = crate::model::forward_offline(&model, &clip).unwrap();
        assert_eq!(pooled.dims(), logits.dims());
        assert!(pooled.max_abs_diff(&logits) <= 1e-5);
        assert_eq!(argmax(pooled.data()), argmax(logits.data()));
    }

    #[test]
    fn one_hot_fc_row_selects_a_channel() {
        let mut model = tiny_model(2);
        let (k, c) = model.fc.weight.dims2().unwrap();
        model.fc.weight.data_mut().fill(0.0);
        model.fc.weight.data_mut()[3] = 1.0; // row 0: class 0 reads channel 3
        let clip = tiny_clip(61);
        let cam = cam_logits(&model, &clip).unwrap();
        let (features, t_cur) = model.forward_features(&clip.tensor).unwrap();
        let (_, fc_c, h, w) = features.dims4().unwrap();
        assert_eq!(fc_c, c);
        let bias = model.fc.bias.data()[0];
        for ti in 0..t_cur {
            for hi in 0..h {
                for wi in 0..w {
                    let expect = features.at4(ti, 3, hi, wi) + bias;
                    let got = cam.at5(0, 0, ti, hi, wi);
                    assert!((got - expect).abs() <= 1e-6, "{got} vs {expect}");
                }
            }
        }
        let _ = k;
    }

    #[test]
    fn zeroed_backbone_gives_constant_cam() {
        let mut model = tiny_model(3);
        for (name, _) in model.named_weights() {
            let _ = name;
        }
        model.stem.weight.data_mut().fill(0.0);
        model.stem.bias.data_mut().fill(0.0);
        for stage in &mut model.stages {
            for block in stage {
                block.conv1.weight.data_mut().fill(0.0);
                block.conv1.bias.data_mut().fill(0.0);
                block.conv2.weight.data_mut().fill(0.0);
                block.conv2.bias.data_mut().fill(0.0);
                if let Some(p) = &mut block.projection {
                    p.weight.data_mut().fill(0.0);
                    p.bias.data_mut().fill(0.0);
                }
            }
        }
        let clip = tiny_clip(62);
        let cam = cam_logits(&model, &clip).unwrap();
        let (_, k, t, h, w) = cam.dims5().unwrap();
        for ki in 0..k {
            let expect = model.fc.bias.data()[ki];
            for ti in 0..t {
                for hi in 0..h {
                    for wi in 0..w {
                        assert_eq!(cam.at5(0, ki, ti, hi, wi), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn mask_keeps_exact_fraction_on_distinct_values() {
        // 5 frames x 4x5 pixels of strictly increasing values.
        let n = 5 * 4 * 5;
        let cam = Tensor::new(vec![1, 1, 5, 4, 5], (0..n).map(|i| i as f32).collect()).unwrap();
        let mask = cam_mask(&cam, 0, (5, 4, 5), 0.2).unwrap();
        let ones = mask.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(ones, 20); // round(0.2 * 100)
        // the kept region is the top of the ramp
        assert!(mask.data()[n - 20..].iter().all(|&v| v == 1.0));
        assert!(mask.data()[..n - 20].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_matches_sort_oracle_with_ties() {
        let values: Vec<f32> = vec![1.0, 2.0, 2.0, 2.0, 3.0, 5.0, 5.0, 0.0, 4.0, 2.5];
        let thr = quantile_threshold(&values, 0.3).unwrap().unwrap();
        // independent full-sort oracle
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let keep = (0.3f64 * values.len() as f64).round() as usize;
        assert_eq!(thr, sorted[keep - 1]);
        let kept = values.iter().filter(|&&v| v >= thr).count();
        let ties = values.iter().filter(|&&v| v == thr).count();
        assert!(kept >= keep && kept <= keep + ties);
    }

    #[test]
    fn keep_fraction_bounds_are_enforced() {
        let cam = Tensor::zeros(&[1, 1, 1, 2, 2]).unwrap();
        assert!(cam_mask(&cam, 0, (1, 2, 2), 0.0).is_err());
        assert!(cam_mask(&cam, 0, (1, 2, 2), 1.0).is_err());
        assert!(cam_mask(&cam, 5, (1, 2, 2), 0.2).is_err());
    }

    #[test]
    fn dissect_shapes_and_mask_budget() {
        let model = tiny_model(4);
        let clip = tiny_clip(63);
        let map = dissect(&model, &clip, 0.2).unwrap();
        assert_eq!(map.raw.dims(), &[1, 10, 8, 16, 16]);
        assert_eq!(map.mask.dims(), &[1, 8, 16, 16]);
        assert!(map.predicted_class < 10);
        let total = 8 * 16 * 16;
        let ones = map.mask.data().iter().filter(|&&v| v == 1.0).count();
        let expect = (0.2 * total as f64).round() as usize;
        // bilinear output can tie only at flat plateaus; allow the tie slack
        assert!(
            ones >= expect && ones <= expect + 32,
            "kept {ones}, wanted about {expect}"
        );
    }

    #[test]
    fn temporal_replication_follows_pool_ratio() {
        let spec = ModelSpec { temporal_pool: true, ..ModelSpec::preset_tiny() };
        let model = Model::build(&spec, 5).unwrap();
        let clip = tiny_clip(64);
        let cam = cam_logits(&model, &clip).unwrap();
        assert_eq!(cam.dims()[2], 4); // 8 frames pooled to 4
        let map = dissect(&model, &clip, 0.2).unwrap();
        assert_eq!(map.raw.dims()[2], 8); // replicated back to the clip
        // frames 0 and 1 replicate pooled frame 0
        let (_, _, _, h, w) = map.raw.dims5().unwrap();
        for hi in 0..h {
            for wi in 0..w {
                assert_eq!(
                    map.raw.at5(0, 0, 0, hi, wi),
                    map.raw.at5(0, 0, 1, hi, wi)
                );
            }
        }
    }

    #[test]
    fn pgm_dump_is_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let mask = Tensor::new(
            vec![1, 2, 2, 3],
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let paths = write_mask_pgms(&mask, dir.path(), "mask").unwrap();
        assert_eq!(paths.len(), 2);
        let bytes = std::fs::read(&paths[0]).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[255, 0, 255, 0, 0, 0]);
    }
}
