use contention_lab::bench::tpcc::CustomerSel;
use contention_lab::bench::{MicroConfig, MicroWorkload, TpccConfig, TpccWorkload};
use contention_lab::engine::Workload;
use contention_lab::txn::TxnClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 1_000_000;

#[test]
fn hot_keys_are_uniform_over_the_hot_set() {
    let hot = 64usize;
    let w = MicroWorkload::new(MicroConfig { hot_set_size: hot as u64, ..MicroConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts = vec![0u64; hot];
    for _ in 0..DRAWS {
        let t = w.gen_txn(&mut rng);
        for &k in &t.keys[..2] {
            counts[k as usize] += 1;
        }
    }
    // each transaction holds a slot at most once: Bernoulli(2/64) per txn
    let p = 2.0 / hot as f64;
    let mean = DRAWS as f64 * p;
    let sigma = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    // 64 slots at 3 sigma: about 0.17 expected outliers by chance
    let outliers: Vec<(usize, u64)> =
        counts.iter().copied().enumerate().filter(|&(_, c)| (c as f64 - mean).abs() > 3.0 * sigma).collect();
    assert!(outliers.len() <= 2, "slots beyond 3 sigma ({mean:.0} ± {:.0}): {outliers:?}", 3.0 * sigma);
    assert!(counts.iter().all(|&c| (c as f64 - mean).abs() <= 4.5 * sigma), "{counts:?}");
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
    // 63 degrees of freedom, 99.9th percentile
    assert!(chi2 < 103.4, "chi-square {chi2:.1}");
}

fn within(got: usize, of: usize, pct: f64, what: &str) {
    let frac = got as f64 / of as f64;
    assert!((frac - pct / 100.0).abs() <= 0.005, "{what}: {:.3}% vs {pct}%", frac * 100.0);
}

#[test]
fn tpcc_mix_matches_configuration() {
    let cfg = TpccConfig { warehouses: 4, ..TpccConfig::default() };
    let w = TpccWorkload::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let neworders = (0..DRAWS).filter(|&i| w.generate(&mut rng, i).class() == TxnClass::NewOrder).count();
    within(neworders, DRAWS, cfg.neworder_pct as f64, "NewOrder share");

    let remote = (0..DRAWS)
        .filter(|&i| {
            let home = w.home(i);
            w.gen_neworder(&mut rng, home).lines.iter().any(|l| l.1 != home)
        })
        .count();
    within(remote, DRAWS, cfg.remote_neworder_pct as f64, "remote NewOrder");

    let (mut remote, mut by_name) = (0, 0);
    for i in 0..DRAWS {
        let p = w.gen_payment(&mut rng, w.home(i));
        remote += usize::from(p.c_w != p.w);
        by_name += usize::from(matches!(p.customer, CustomerSel::LastName(_)));
    }
    within(remote, DRAWS, cfg.remote_payment_pct as f64, "remote Payment");
    within(by_name, DRAWS, cfg.payment_by_name_pct as f64, "Payment by last name");
}
