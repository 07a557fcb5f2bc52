use caf_core::*;
use std::time::Instant;

fn main() {
    let src = DistributionSpec::standard_gaussian(2);
    let tgt = DistributionSpec::two_moons(0.05);
    let coupling = make_stochastic_coupling(&src, &tgt, 4096, 1).unwrap();
    let mut model = MlpModel::new(&[3, 128, 128, 128, 128, 128, 2], Activation::Relu, 1).unwrap();
    let cfg = TrainConfig {
        iterations: 200,
        batch_size: 64,
        seed: 1,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let report = train(TrainTarget::RfVelocity(&mut model), &coupling, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("200 iters batch 64 on 5x128: {:.2}s ({:.1} ms/iter), loss {:.4} -> {:.4}",
        dt, dt * 5.0, report.loss_curve[0], report.final_loss);

    let t0 = Instant::now();
    let n = 2000;
    let refl = reflow(&model, &src, n, 50, 2).unwrap();
    println!("reflow {} pairs x 50 steps: {:.2}s", refl.len(), t0.elapsed().as_secs_f64());
}
