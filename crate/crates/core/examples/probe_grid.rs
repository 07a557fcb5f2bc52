use caf_core::metrics::{coupling_preservation, nfss_caf, nfss_rf, sliced_wasserstein};
use caf_core::nn::{read_checkpoint_file, write_checkpoint_file};
use caf_core::sample::{sample_caf, sample_rf, MlpAcceleration, MlpVelocity};
use caf_core::*;
use std::path::PathBuf;
use std::time::Instant;

// args: seed dataset iters batch lr tf h [a_iters a_lr]
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let dataset = args[2].clone();
    let iters: usize = args[3].parse().unwrap();
    let batch: usize = args[4].parse().unwrap();
    let lr: f64 = args[5].parse().unwrap();
    let tf: bool = args[6].parse().unwrap();
    let h: f64 = args[7].parse().unwrap();

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
    let a_iters: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(iters);
    let a_lr: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(lr);
    let n_pairs: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(4096);
    let mk_cfg = |tag: u64| TrainConfig {
        iterations: if tag == 4 { a_iters } else { iters },
        batch_size: batch,
        adam: if tag == 4 { AdamParams { lr: a_lr, ..AdamParams::default() } } else { adam },
        seed: seed ^ tag,
        flow: FlowConfig { h, ..FlowConfig::default() },
        teacher_forcing: tf,
        ..TrainConfig::default()
    };

    // Cache phase 1-2 per (seed, dataset): 1-RF + reflow coupling.
    let cache = PathBuf::from(format!("/tmp/probe_cache_{dataset}_{seed}_{n_pairs}"));
    std::fs::create_dir_all(&cache).unwrap();
    let rf1_path = cache.join("rf1.ckpt");
    let det_path = cache.join("det.cplg");
    let det = if det_path.exists() {
        data::read_coupling_file(&det_path).unwrap()
    } else {
        let stoch = make_stochastic_coupling(&src, &tgt, n_pairs.max(2048), seed).unwrap();
        let mut rf1 = MlpModel::new(&dims, Activation::Relu, seed ^ 0xA).unwrap();
        let base = TrainConfig { iterations: 6000, batch_size: 64, seed: seed ^ 1, adam: AdamParams::default(), flow: FlowConfig { h, ..FlowConfig::default() }, ..TrainConfig::default() };
        let r = train(TrainTarget::RfVelocity(&mut rf1), &stoch, &base).unwrap();
        eprintln!("[{:6.1}s] 1-RF loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);
        write_checkpoint_file(&rf1, &rf1_path).unwrap();
        let det = reflow(&rf1, &src, n_pairs, 50, seed ^ 0xB).unwrap();
        data::write_coupling_file(&det, &det_path).unwrap();
        det
    };
    let _ = read_checkpoint_file(&rf1_path);

    // 2-RF.
    let rf2_path = cache.join(format!("rf2_{iters}_{batch}_{lr}.ckpt"));
    let rf2 = if rf2_path.exists() {
        read_checkpoint_file(&rf2_path).unwrap()
    } else {
        let mut rf2 = MlpModel::new(&dims, Activation::Relu, seed ^ 0xC).unwrap();
        let r = train(TrainTarget::RfVelocity(&mut rf2), &det, &mk_cfg(2)).unwrap();
        eprintln!("[{:6.1}s] 2-RF loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);
        write_checkpoint_file(&rf2, &rf2_path).unwrap();
        rf2
    };

    // CAF velocity (depends on h, iters, batch, lr).
    let cafv_path = cache.join(format!("cafv_{iters}_{batch}_{lr}_{h}.ckpt"));
    let caf_v = if cafv_path.exists() {
        read_checkpoint_file(&cafv_path).unwrap()
    } else {
        let mut m = MlpModel::new(&dims, Activation::Relu, seed ^ 0xD).unwrap();
        let r = train(TrainTarget::CafVelocity(&mut m), &det, &mk_cfg(3)).unwrap();
        eprintln!("[{:6.1}s] CAF-v loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);
        write_checkpoint_file(&m, &cafv_path).unwrap();
        m
    };

    // CAF acceleration (depends on everything).
    let cafa_path = cache.join(format!("cafa_{iters}_{batch}_{lr}_{h}_{tf}_{a_iters}_{a_lr}.ckpt"));
    let caf_a = if cafa_path.exists() {
        read_checkpoint_file(&cafa_path).unwrap()
    } else {
        let mut m = MlpModel::new(&a_dims, Activation::Relu, seed ^ 0xE).unwrap();
        let r = train(TrainTarget::CafAcceleration { acceleration: &mut m, velocity: &caf_v }, &det, &mk_cfg(4)).unwrap();
        eprintln!("[{:6.1}s] CAF-a loss {:.4}", t0.elapsed().as_secs_f64(), r.final_loss);
        write_checkpoint_file(&m, &cafa_path).unwrap();
        m
    };

    let rf_field = MlpVelocity { model: &rf2 };
    let v_field = MlpVelocity { model: &caf_v };
    let a_field = MlpAcceleration { model: &caf_a, ivc: true };

    // Metrics at several N to see the trend.
    let n_eval = 2000;
    let x0s = sample_distribution(&src, n_eval, seed ^ 0xF0).unwrap();
    let fresh_a = sample_distribution(&tgt, n_eval, seed ^ 0xF1).unwrap();
    let fresh_b = sample_distribution(&tgt, n_eval, seed ^ 0xF2).unwrap();
    let floor = sliced_wasserstein(&fresh_a, &fresh_b, 128, 7).unwrap().value;
    print!("cfg seed={seed} ds={dataset} iters={iters} batch={batch} lr={lr} tf={tf} h={h} | floor {floor:.4}");

    for n in [1usize, 2, 5] {
        let rf_out: Vec<Vec<f64>> = x0s.iter().map(|x| sample_rf(x, &rf_field, n).unwrap().0).collect();
        let caf_out: Vec<Vec<f64>> = x0s.iter().map(|x| sample_caf(x, &v_field, &a_field, n).unwrap().0).collect();
        let sw_rf = sliced_wasserstein(&rf_out, &fresh_a, 128, 7).unwrap().value;
        let sw_caf = sliced_wasserstein(&caf_out, &fresh_a, 128, 7).unwrap().value;
        print!(" | N={n} sw rf {sw_rf:.4} caf {sw_caf:.4} {}", if sw_caf < sw_rf { "Y" } else { "n" });
    }
    println!();

    let cp_pairs = det.head(1000).unwrap();
    for n in [1usize, 2, 5] {
        let cp_rf = coupling_preservation(&cp_pairs, |x| Ok(sample_rf(x, &rf_field, n)?.0), 5).unwrap();
        let cp_caf = coupling_preservation(&cp_pairs, |x| Ok(sample_caf(x, &v_field, &a_field, n)?.0), 5).unwrap();
        print!(" | N={n} cp rf {:.4} caf {:.4} {}", cp_rf.mean_error.value, cp_caf.mean_error.value, if cp_caf.mean_error.value < cp_rf.mean_error.value { "Y" } else { "n" });
    }
    println!();

    let eval_pairs = det.head(256).unwrap();
    let nf_rf = nfss_rf(&rf_field, &eval_pairs, 32, 5).unwrap().value;
    let nf_caf = nfss_caf(&v_field, &a_field, &eval_pairs, 32, 5).unwrap().value;
    println!(" | nfss rf {nf_rf:.5} caf {nf_caf:.5} {}  ({:.1}s)", if nf_caf < nf_rf { "Y" } else { "n" }, t0.elapsed().as_secs_f64());
}
