//! Manual learnability probe. Run with
//! `cargo test -p tricam-core --features parallel --test learn_probe -- --ignored --nocapture`.

use std::time::Instant;

use tricam_core::harness::{
    evaluate, split_dataset, train_model, EvalOptions, SplitSpec, TrainRunConfig,
};
use tricam_core::network::init_model;
use tricam_core::synth::{default_rig, synth_dataset, SceneConfig};

#[test]
#[ignore]
fn short_training_run_learns() {
    let rig = default_rig();
    let cfg = SceneConfig::desk_default(rig.clone());
    let data = synth_dataset(&cfg, 1000, 42);
    let (train, val, test) = split_dataset(&data, &SplitSpec { seed: 1, ..Default::default() }).unwrap();

    let mut run = TrainRunConfig::default();
    run.epochs = 20;
    run.seed = 7;

    let untrained = init_model(&run.resolved_net()).unwrap();
    let base = evaluate(&untrained, &test, &rig, &EvalOptions::default()).unwrap();
    println!("untrained test error: {:.3} cm", base.mean_error_cm);

    let t0 = Instant::now();
    let outcome = train_model(&train, &val, &rig, &run).unwrap();
    println!("20 epochs in {:?}", t0.elapsed());
    for e in outcome.curves.iter() {
        println!(
            "epoch {:3}  joint {:.5}  main {:.5}  val {:.3} cm",
            e.epoch, e.train_joint, e.train_main, e.val_error_cm
        );
    }
    let report = evaluate(&outcome.model, &test, &rig, &EvalOptions::default()).unwrap();
    println!(
        "trained test error: {:.3} cm ({:.1}% of untrained)",
        report.mean_error_cm,
        100.0 * report.mean_error_cm / base.mean_error_cm
    );
}
