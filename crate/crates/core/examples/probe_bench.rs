use caf_core::metrics::{coupling_preservation, nfss_caf, nfss_rf, sliced_wasserstein};
use caf_core::sample::{sample_caf, sample_rf, MlpAcceleration, MlpVelocity};
use caf_core::*;
use std::time::Instant;

fn main() {
    let seed = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1u64);
    let dataset = std::env::args().nth(2).unwrap_or_else(|| "moons".into());
    let h = 2.0;
    let iters: usize = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let lr: f64 = std::env::args().nth(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);

    let src = DistributionSpec::standard_gaussian(2);
    let tgt = match dataset.as_str() {
        "moons" => DistributionSpec::two_moons(0.05),
        "ring" => DistributionSpec::gaussian_ring(8, 3.0, 0.2),
        other => panic!("unknown dataset {other}"),
    };
    let t0 = Instant::now();

    let dims = [3usize, 128, 128, 128, 128, 128, 2];
    let a_dims = [5usize, 128, 128, 128, 128, 128, 2];
    let adam = AdamParams { lr, ..AdamParams::default() };
    let teacher_forcing = std::env::args()
        .nth(5)
        .map(|s| s.parse().unwrap())
        .unwrap_or(true);
    let mk_cfg = |tag: u64| TrainConfig {
        iterations: iters,
        batch_size: 64,
        adam,
        seed: seed ^ tag,
        flow: FlowConfig { h, ..FlowConfig::default() },
        teacher_forcing,
        ..TrainConfig::default()
    };

    // Phase 1: 1-RF on a stochastic coupling.
    let stoch = make_stochastic_coupling(&src, &tgt, 4096, seed).unwrap();
    let mut rf1 = MlpModel::new(&dims, Activation::Relu, seed ^ 0xA).unwrap();
    let r = train(TrainTarget::RfVelocity(&mut rf1), &stoch, &mk_cfg(1)).unwrap();
    println!("[{:6.1}s] 1-RF loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);

    // Phase 2: reflow -> deterministic coupling.
    let det = reflow(&rf1, &src, 4096, 50, seed ^ 0xB).unwrap();
    println!("[{:6.1}s] reflow {} pairs", t0.elapsed().as_secs_f64(), det.len());

    // Phase 3: 2-RF on the deterministic coupling.
    let mut rf2 = MlpModel::new(&dims, Activation::Relu, seed ^ 0xC).unwrap();
    let r = train(TrainTarget::RfVelocity(&mut rf2), &det, &mk_cfg(2)).unwrap();
    println!("[{:6.1}s] 2-RF loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);

    // Phase 4: CAF velocity + acceleration on the same coupling.
    let mut caf_v = MlpModel::new(&dims, Activation::Relu, seed ^ 0xD).unwrap();
    let r = train(TrainTarget::CafVelocity(&mut caf_v), &det, &mk_cfg(3)).unwrap();
    println!("[{:6.1}s] CAF-v loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);
    let mut caf_a = MlpModel::new(&a_dims, Activation::Relu, seed ^ 0xE).unwrap();
    let r = train(
        TrainTarget::CafAcceleration { acceleration: &mut caf_a, velocity: &caf_v },
        &det,
        &mk_cfg(4),
    )
    .unwrap();
    println!("[{:6.1}s] CAF-a loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);

    // Metrics at N = 1.
    let n_eval = 2000;
    let x0s = sample_distribution(&src, n_eval, seed ^ 0xF0).unwrap();
    let rf_field = MlpVelocity { model: &rf2 };
    let v_field = MlpVelocity { model: &caf_v };
    let a_field = MlpAcceleration { model: &caf_a, ivc: true };

    let rf_out: Vec<Vec<f64>> = x0s.iter().map(|x| sample_rf(x, &rf_field, 1).unwrap().0).collect();
    let caf_out: Vec<Vec<f64>> = x0s.iter().map(|x| sample_caf(x, &v_field, &a_field, 1).unwrap().0).collect();

    let fresh_a = sample_distribution(&tgt, n_eval, seed ^ 0xF1).unwrap();
    let fresh_b = sample_distribution(&tgt, n_eval, seed ^ 0xF2).unwrap();
    let floor = sliced_wasserstein(&fresh_a, &fresh_b, 128, 7).unwrap().value;
    let sw_rf = sliced_wasserstein(&rf_out, &fresh_a, 128, 7).unwrap().value;
    let sw_caf = sliced_wasserstein(&caf_out, &fresh_a, 128, 7).unwrap().value;
    println!(
        "SW: floor {floor:.4}  rf {sw_rf:.4}  caf {sw_caf:.4}  -> caf<rf: {}",
        sw_caf < sw_rf
    );

    let eval_pairs = det.head(256).unwrap();
    let nf_rf = nfss_rf(&rf_field, &eval_pairs, 32, 5).unwrap().value;
    let nf_caf = nfss_caf(&v_field, &a_field, &eval_pairs, 32, 5).unwrap().value;
    println!("NFSS: rf {nf_rf:.5}  caf {nf_caf:.5}  -> caf<rf: {}", nf_caf < nf_rf);

    let cp_pairs = det.head(1000).unwrap();
    let cp_rf = coupling_preservation(&cp_pairs, |x| Ok(sample_rf(x, &rf_field, 1)?.0), 5).unwrap();
    let cp_caf =
        coupling_preservation(&cp_pairs, |x| Ok(sample_caf(x, &v_field, &a_field, 1)?.0), 5)
            .unwrap();
    println!(
        "CP: rf {:.4} ({:.1} dB)  caf {:.4} ({:.1} dB)  -> caf<rf: {}",
        cp_rf.mean_error.value,
        cp_rf.psnr_analog,
        cp_caf.mean_error.value,
        cp_caf.psnr_analog,
        cp_caf.mean_error.value < cp_rf.mean_error.value
    );
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
