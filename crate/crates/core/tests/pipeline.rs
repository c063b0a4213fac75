//! End-to-end flows over the public surface: spec JSON and weight archives
//! on disk, offline and streaming inference, profiling and dissection.

use tshift_core::dissect;
use tshift_core::fixture::seeded_tensor;
use tshift_core::io::{read_tnsr_file, write_tnsr_file};
use tshift_core::model::{forward_offline, sample_frames, Model, ModelSpec};
use tshift_core::profile::profile_model;
use tshift_core::shift::{Fraction, ShiftConfig, ShiftDirection, ShiftPadding, ShiftPlacement};
use tshift_core::stream::StreamState;
use tshift_core::tensor::frame_slice;

fn uni_spec() -> ModelSpec {
    ModelSpec {
        shift: Some(ShiftConfig {
            fraction_per_direction: Fraction::new(1, 8).unwrap(),
            direction: ShiftDirection::Unidirectional,
            padding: ShiftPadding::Zero,
            placement: ShiftPlacement::Residual,
        }),
        ..ModelSpec::preset_tiny()
    }
}

#[test]
fn spec_and_weights_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = uni_spec();

    let spec_path = dir.path().join("model.json");
    std::fs::write(&spec_path, spec.to_json_pretty().unwrap()).unwrap();
    let spec_back = ModelSpec::from_json(&std::fs::read_to_string(&spec_path).unwrap()).unwrap();
    assert_eq!(spec_back, spec);

    let model = Model::build(&spec, 21).unwrap();
    let weights_path = dir.path().join("weights.bin");
    let mut writer = std::io::BufWriter::new(std::fs::File::create(&weights_path).unwrap());
    model.write_archive(&mut writer).unwrap();
    drop(writer);
    let mut reader = std::io::BufReader::new(std::fs::File::open(&weights_path).unwrap());
    let loaded = Model::load_archive(&spec_back, &mut reader).unwrap();

    let video = seeded_tensor(77, &[1, 3, 20, 16, 16]);
    let clip_path = dir.path().join("clip.tnsr");
    write_tnsr_file(&clip_path, &video).unwrap();
    let clip = sample_frames(&read_tnsr_file(&clip_path).unwrap(), spec.frames).unwrap();

    let a = forward_offline(&model, &clip).unwrap();
    let b = forward_offline(&loaded, &clip).unwrap();
    assert_eq!(a, b, "reloaded weights must forward bit-identically");
}

#[test]
fn stream_replay_tracks_offline_average() {
    let spec = uni_spec();
    let model = Model::build(&spec, 22).unwrap();
    let video = seeded_tensor(78, &[1, 3, 32, 12, 12]);
    let clip = sample_frames(&video, spec.frames).unwrap();

    let mut state = StreamState::init(&model, 12, 12).unwrap();
    for t in 0..spec.frames {
        state.step(&frame_slice(&clip.tensor, t).unwrap()).unwrap();
    }
    let running = state.running_prediction().unwrap();
    let offline = forward_offline(&model, &clip).unwrap();
    assert!(running.max_abs_diff(&offline) <= 1e-5);
    assert_eq!(state.frame_count(), spec.frames as u64);
}

#[test]
fn profile_matches_archive_size_and_cache() {
    let spec = uni_spec();
    let model = Model::build(&spec, 23).unwrap();
    let report = profile_model(&model, [1, 3, 8, 16, 16]).unwrap();

    let mut buf = Vec::new();
    model.write_archive(&mut buf).unwrap();
    // every param is one f32 in the archive, plus headers
    assert!(buf.len() as u64 > report.params * 4);
    assert!((buf.len() as u64) < report.params * 4 + 4096);

    let state = StreamState::init(&model, 16, 16).unwrap();
    assert_eq!(report.cache_bytes, Some(state.cache_bytes()));
    assert_eq!(report.input_bytes, 3 * 8 * 16 * 16 * 4);
}

#[test]
fn dissection_of_a_loaded_model() {
    let spec = ModelSpec { shift: Some(ShiftConfig::default()), ..ModelSpec::preset_tiny() };
    let model = Model::build(&spec, 24).unwrap();
    let video = seeded_tensor(79, &[1, 3, 8, 16, 16]);
    let clip = sample_frames(&video, 8).unwrap();
    let map = dissect::dissect(&model, &clip, 0.2).unwrap();
    assert_eq!(map.raw.dims(), &[1, 10, 8, 16, 16]);
    assert_eq!(map.mask.dims(), &[1, 8, 16, 16]);
    let logits = forward_offline(&model, &clip).unwrap();
    assert_eq!(map.predicted_class, dissect::argmax(logits.data()));

    // raw CAM of the predicted class thresholded by the mask stays binary
    assert!(map.mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn placements_diverge_on_multi_frame_clips() {
    let mk = |placement| ModelSpec {
        shift: Some(ShiftConfig { placement, ..ShiftConfig::default() }),
        ..ModelSpec::preset_tiny()
    };
    let residual = Model::build(&mk(ShiftPlacement::Residual), 25).unwrap();
    let inplace = Model::build(&mk(ShiftPlacement::InPlace), 25).unwrap();
    let clip = seeded_tensor(80, &[1, 3, 8, 12, 12]);
    let a = residual.forward_video(&clip).unwrap();
    let b = inplace.forward_video(&clip).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-6);
}
