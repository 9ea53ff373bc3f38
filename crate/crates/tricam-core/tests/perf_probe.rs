//! Manual throughput probe for the training loop. Run with
//! `cargo test -p tricam-core --features parallel --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;

use tricam_core::harness::SplitSpec;
use tricam_core::network::{
    init_model, train_step, AdamState, BatchInput, ForwardOpts, TrainHyper, TriCamConfig,
};
use tricam_core::synth::{default_rig, synth_dataset, SceneConfig};

#[test]
#[ignore]
fn training_speed_probe() {
    let rig = default_rig();
    let cfg = SceneConfig::desk_default(rig.clone());
    let t_gen = Instant::now();
    let data = synth_dataset(&cfg, 256, 7);
    println!("generated 256 samples in {:?}", t_gen.elapsed());

    let _ = SplitSpec::default();
    let net = TriCamConfig::default();
    let mut model = init_model(&net).unwrap();
    println!("params: {}", model.params.len());
    let mut adam = AdamState::new(model.params.len());
    let hyper = TrainHyper::default();

    let refs: Vec<_> = data.iter().take(64).collect();
    let batch = BatchInput::from_samples(&refs, &rig, None);

    // warm-up step
    train_step(&mut model, &batch, &mut adam, &hyper, ForwardOpts::default()).unwrap();

    let n_steps = 6;
    let t0 = Instant::now();
    for _ in 0..n_steps {
        train_step(&mut model, &batch, &mut adam, &hyper, ForwardOpts::default()).unwrap();
    }
    let per_step = t0.elapsed() / n_steps;
    let steps_per_epoch = 2800usize.div_ceil(64);
    let full_run = per_step * (steps_per_epoch * 150) as u32;
    println!(
        "step {per_step:?}  epoch(44 steps) {:?}  150 epochs {:?}",
        per_step * steps_per_epoch as u32,
        full_run
    );
}
