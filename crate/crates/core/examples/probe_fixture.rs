use caf_core::sample::{sample_caf, sample_rf, MlpAcceleration, MlpVelocity};
use caf_core::vecmath::dist;
use caf_core::*;
use std::time::Instant;

// args: seed v_iters a_iters width depth lr
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let v_iters: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3000);
    let a_iters: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(600);
    let width: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(64);
    let depth: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let lr: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(2e-3);
    let act = match args.get(7).map(String::as_str).unwrap_or("relu") {
        "tanh" => Activation::Tanh,
        "gelu" => Activation::Gelu,
        _ => Activation::Relu,
    };
    let h: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let t0 = Instant::now();

    let fixture = crossing_fixture();
    let tile: usize = args.get(13).map(|s| s.parse().unwrap()).unwrap_or(64);
    let tiled = Coupling::new(
        (0..tile).flat_map(|_| fixture.pairs().iter().cloned()).collect(),
        CouplingMode::Deterministic,
        "tiled crossing fixture",
    )
    .unwrap();

    let mut v_dims = vec![3usize];
    v_dims.extend(std::iter::repeat(width).take(depth));
    v_dims.push(2);
    let a_depth: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(depth);
    let a_width: usize = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(width);
    let mut a_dims_ivc = vec![5usize];
    a_dims_ivc.extend(std::iter::repeat(a_width).take(a_depth));
    a_dims_ivc.push(2);
    let mut a_dims_plain = vec![3usize];
    a_dims_plain.extend(std::iter::repeat(a_width).take(a_depth));
    a_dims_plain.push(2);

    let a_lr: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(3e-3);
    let a_batch: usize = args.get(12).map(|s| s.parse().unwrap()).unwrap_or(64);
    let tiled_len = 2 * tile;
    let cfg = |iters: usize, tag: u64, ivc: bool| TrainConfig {
        iterations: iters,
        batch_size: if tag == 4 { a_batch } else { args.get(16).map(|s| s.parse().unwrap()).unwrap_or(64).min(tiled_len) },
        adam: AdamParams {
            lr: match tag {
                4 => a_lr,
                1 | 2 => 1e-3,
                _ => lr,
            },
            ..AdamParams::default()
        },
        seed: seed ^ tag,
        flow: FlowConfig { h, ..FlowConfig::default() },
        ivc,
        ..TrainConfig::default()
    };

    // CAF arms: converged velocity net, short-budget acceleration nets.
    let mut caf_v = MlpModel::new(&v_dims, act, seed ^ 0xD).unwrap();
    let r = train(TrainTarget::CafVelocity(&mut caf_v), &tiled, &cfg(v_iters, 3, true)).unwrap();
    eprintln!("caf-v loss {:.2e}", r.final_loss);

    let mut a_ivc = MlpModel::new(&a_dims_ivc, act, seed ^ 0xE).unwrap();
    let r = train(
        TrainTarget::CafAcceleration { acceleration: &mut a_ivc, velocity: &caf_v },
        &tiled,
        &cfg(a_iters, 4, true),
    )
    .unwrap();
    eprintln!("caf-a ivc loss {:.2e}", r.final_loss);

    let mut a_plain = MlpModel::new(&a_dims_plain, act, seed ^ 0xE).unwrap();
    let r = train(
        TrainTarget::CafAcceleration { acceleration: &mut a_plain, velocity: &caf_v },
        &tiled,
        &cfg(a_iters, 4, false),
    )
    .unwrap();
    eprintln!("caf-a plain loss {:.2e}", r.final_loss);

    // RF arm: 1-RF on the fixture, reflow the fixture sources, 2-RF on the
    // rewired coupling.
    let rf1_iters: usize = args.get(14).map(|s| s.parse().unwrap()).unwrap_or(v_iters);
    let rf2_iters: usize = args.get(15).map(|s| s.parse().unwrap()).unwrap_or(v_iters);
    let mut rf1 = MlpModel::new(&v_dims, act, seed ^ 0xA).unwrap();
    let r = train(TrainTarget::RfVelocity(&mut rf1), &tiled, &cfg(rf1_iters, 1, true)).unwrap();
    eprintln!("1-rf loss {:.2e}", r.final_loss);
    let src_points = DistributionSpec::point_set(
        fixture.pairs().iter().map(|(x0, _)| x0.clone()).collect(),
    );
    let rewired = reflow(&rf1, &src_points, 128, 100, seed ^ 0xB).unwrap();
    for (x0, x1) in rewired.pairs().iter().take(4) {
        eprintln!("  reflow {x0:?} -> {:?}", &x1[..]);
    }
    let mut rf2 = MlpModel::new(&v_dims, act, seed ^ 0xC).unwrap();
    let r = train(TrainTarget::RfVelocity(&mut rf2), &rewired, &cfg(rf2_iters, 2, true)).unwrap();
    eprintln!("2-rf loss {:.2e}", r.final_loss);

    // One-step endpoint errors against the TRUE fixture targets.
    let v_field = MlpVelocity { model: &caf_v };
    let ivc_field = MlpAcceleration { model: &a_ivc, ivc: true };
    let plain_field = MlpAcceleration { model: &a_plain, ivc: false };
    let rf_field = MlpVelocity { model: &rf2 };

    let mut err_ivc = 0.0;
    let mut err_plain = 0.0;
    let mut err_rf = 0.0;
    for (x0, x1) in fixture.pairs() {
        let (e1, _) = sample_caf(x0, &v_field, &ivc_field, 1).unwrap();
        let (e2, _) = sample_caf(x0, &v_field, &plain_field, 1).unwrap();
        let (e3, _) = sample_rf(x0, &rf_field, 1).unwrap();
        eprintln!("  x0 {x0:?}: ivc {e1:?} plain {e2:?} rf {e3:?} true {x1:?}");
        err_ivc += dist(&e1, x1) / 2.0;
        err_plain += dist(&e2, x1) / 2.0;
        err_rf += dist(&e3, x1) / 2.0;
    }
    println!(
        "seed={seed} v_iters={v_iters} a_iters={a_iters} {width}x{depth} a={a_width}x{a_depth} lr={lr} act={act:?} h={h} | ivc {err_ivc:.4} (<0.05 {}) plain {err_plain:.4} (>0.2 {}) rf {err_rf:.4} (>0.2 {})  [{:.1}s]",
        err_ivc < 0.05,
        err_plain > 0.2,
        err_rf > 0.2,
        t0.elapsed().as_secs_f64()
    );
}
