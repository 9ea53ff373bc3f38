//! Manual profiling helper. Run with
//! `cargo test -p tricam-core --test perf_breakdown -- --ignored --nocapture`.

use std::time::Instant;

use tricam_core::autodiff::Tape;
use tricam_core::network::{
    forward_with_loss, init_model, BatchInput, ForwardOpts, LossDenoms, TriCamConfig,
};
use tricam_core::synth::{default_rig, synth_dataset, SceneConfig};

#[test]
#[ignore]
fn forward_backward_breakdown() {
    let rig = default_rig();
    let cfg = SceneConfig::desk_default(rig.clone());
    let data = synth_dataset(&cfg, 32, 7);
    let refs: Vec<_> = data.iter().collect();
    let batch = BatchInput::from_samples(&refs, &rig, None);
    let model = init_model(&TriCamConfig::default()).unwrap();
    let denoms = LossDenoms::from_batch(&batch);

    // warm-up
    {
        let mut tape = Tape::new(&model.params);
        let fl = forward_with_loss(&mut tape, &model, &batch, ForwardOpts::default(), &denoms)
            .unwrap();
        let mut grads = vec![0.0; model.params.len()];
        tape.backward_param_grads(fl.joint_node, &mut grads);
    }

    let n = 4;
    let t0 = Instant::now();
    let mut tapes = Vec::new();
    for _ in 0..n {
        let mut tape = Tape::new(&model.params);
        let fl = forward_with_loss(&mut tape, &model, &batch, ForwardOpts::default(), &denoms)
            .unwrap();
        tapes.push((tape, fl.joint_node));
    }
    let fwd = t0.elapsed() / n;

    let t1 = Instant::now();
    for (tape, joint) in &tapes {
        let mut grads = vec![0.0; model.params.len()];
        tape.backward_param_grads(*joint, &mut grads);
    }
    let bwd = t1.elapsed() / n;
    println!("chunk of 32: forward {fwd:?}  backward {bwd:?}");
}
