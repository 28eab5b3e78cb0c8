//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line straight to stdout, so the lines show
//! up even when the harness captures test output.
//!
//! Throughput criteria run sequentially (a process-wide mutex) on shared
//! preloaded tables.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use contention_lab::bench::micro::MICRO_TABLE;
use contention_lab::bench::transfer::{load_accounts, total_balance, INITIAL_BALANCE};
use contention_lab::bench::{
    prepare, run_prepared, BenchConfig, MicroConfig, MicroWorkload, MultipartConfig, MultipartWorkload, Prepared,
    TransferWorkload, WorkloadKind,
};
use contention_lab::engine::{run, EngineConfig, EngineKind, Feed, RunSpec};
use contention_lab::lockmgr::{AcquireOutcome, DeadlockPolicy, LockManager, TxnLocks, WaitStatus};
use contention_lab::metrics::{MetricsReport, Phase};
use contention_lab::storage::{get_u64, Database, PartitionMap, PartitionScheme, RecordId, TableConfig, TableId};
use contention_lab::txn::{AbortCause, LockMode, Procedure, Timestamp, TxnClass, TxnId};
use contention_lab::verify::{check_conflict_serializability, conservation_check, serial_oracle, Serializability};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CORES: usize = 8;
const TABLE: u64 = 200_000;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, ok: bool, detail: impl AsRef<str>) {
    let line = format!("criterion {n:>2}: {} {}\n", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{}", line.trim_end());
}

fn timed(engine: EngineKind, workload: WorkloadKind) -> BenchConfig {
    let mut c = BenchConfig::new(engine, workload);
    c.cores = CORES;
    c.table_size = TABLE;
    c.warmup = Duration::from_millis(300);
    c.duration = Duration::from_millis(1500);
    c
}

fn micro_db() -> &'static Prepared {
    static DB: OnceLock<Prepared> = OnceLock::new();
    DB.get_or_init(|| prepare(&timed(EngineKind::Orthrus, WorkloadKind::MicroRmw)).unwrap())
}

fn tpcc_db() -> &'static Prepared {
    static DB: OnceLock<Prepared> = OnceLock::new();
    DB.get_or_init(|| prepare(&timed(EngineKind::Orthrus, WorkloadKind::Tpcc)).unwrap())
}

fn measure(cfg: &BenchConfig, db: &Prepared) -> MetricsReport {
    run_prepared(cfg, db).unwrap().report
}

const TWO_PL: [DeadlockPolicy; 4] =
    [DeadlockPolicy::WaitFor, DeadlockPolicy::WaitDie, DeadlockPolicy::Dreadlocks, DeadlockPolicy::DeadlockFree];

fn four_threads(kind: EngineKind) -> EngineConfig {
    match kind {
        EngineKind::Orthrus => EngineConfig::orthrus(2, 2),
        k => EngineConfig::new(k, 4),
    }
    .with_history(u64::MAX)
}

fn word0_sum(db: &Database) -> i128 {
    let t = db.table(MICRO_TABLE).unwrap();
    let mut buf = vec![0u8; t.record_size()];
    let s = t.keys().into_iter().fold(0u64, |acc, k| {
        t.read_into(k, &mut buf).unwrap();
        acc.wrapping_add(get_u64(&buf, 0))
    });
    s as i128
}

fn micro_table(n: u64, seed: u64) -> Database {
    let mut db = Database::new(seed);
    db.create_table(TableConfig::new(n as usize, 64)).unwrap();
    db
}

/// Runs `txns` to exhaustion and checks the history, the conserved
/// quantity and a serial replay. `fresh` builds the initial database.
fn check_run(
    kind: EngineKind,
    txns: &[Arc<dyn Procedure>],
    fresh: &dyn Fn() -> Database,
    measure: &dyn Fn(&Database) -> i128,
    expected: i128,
) -> Result<(), String> {
    let db = Arc::new(fresh());
    let out = run(&four_threads(kind), Arc::clone(&db), Feed::fixed(txns.to_vec()), &RunSpec::exhaust())
        .map_err(|e| format!("{kind}: {e}"))?;
    let h = out.history.ok_or("no history")?;
    if h.committed_count() != txns.len() {
        return Err(format!("{kind}: {} of {} committed", h.committed_count(), txns.len()));
    }
    let Serializability::Serializable(order) = check_conflict_serializability(&h) else {
        return Err(format!("{kind}: history has a conflict cycle"));
    };
    if !conservation_check(&db, measure, expected) {
        return Err(format!("{kind}: conserved quantity changed"));
    }
    let idx: Vec<usize> = order.iter().map(|t| t.0 as usize - 1).collect();
    let replay = fresh();
    if serial_oracle(&replay, txns, &idx).map_err(|e| e.to_string())? != db.snapshot() {
        return Err(format!("{kind}: final state differs from serial replay"));
    }
    Ok(())
}

#[test]
fn criterion_01_serializability() {
    let _g = serial();
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut runs = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 128u64 << (seed % 6);
        let gen = MicroWorkload::new(MicroConfig { table_size: n, record_size: 64, ..MicroConfig::default() }).unwrap();
        let micro: Vec<Arc<dyn Procedure>> =
            (0..1000).map(|_| Arc::new(gen.gen_txn(&mut rng)) as Arc<dyn Procedure>).collect();
        let initial = word0_sum(&micro_table(n, seed));

        let accounts = 64u64 << (seed % 7);
        let tgen = TransferWorkload { accounts, max_amount: 400 };
        let transfers: Vec<Arc<dyn Procedure>> =
            (0..1000).map(|_| Arc::new(tgen.gen_txn(&mut rng)) as Arc<dyn Procedure>).collect();

        for kind in EngineKind::ALL {
            let r = check_run(kind, &micro, &|| micro_table(n, seed), &|db| word0_sum(db), initial.wrapping_add(10_000));
            failures.extend(r.err().map(|e| format!("micro seed {seed}: {e}")));
            let r = check_run(
                kind,
                &transfers,
                &|| load_accounts(accounts, 64, seed).unwrap(),
                &total_balance,
                accounts as i128 * INITIAL_BALANCE as i128,
            );
            failures.extend(r.err().map(|e| format!("transfer seed {seed}: {e}")));
            runs += 2;
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(120);
    report(
        1,
        ok,
        format!("{runs} histories, {} failures, {:.1}s {}", failures.len(), elapsed.as_secs_f64(), failures.join("; ")),
    );
}

#[test]
fn criterion_02_message_count() {
    let _g = serial();
    let n = 100_000u64;
    let mut lines = Vec::new();
    let mut ok = true;
    for ncc in [1usize, 2, 3, 5] {
        let cfg = MultipartConfig {
            table_size: 100_000,
            record_size: 64,
            partitions: ncc,
            parts_per_txn: ncc,
            ..MultipartConfig::default()
        };
        let mut db = Database::new(ncc as u64);
        db.create_table(TableConfig::new(100_000, 64)).unwrap();
        let feed = Feed::generated(Arc::new(MultipartWorkload::new(cfg).unwrap()), 7);
        let engine = EngineConfig::orthrus(ncc, 2).with_partition(cfg.partition_map());
        let out = run(&engine, Arc::new(db), feed, &RunSpec::count(n)).unwrap();
        let per = out.total.acquire_messages as f64 / out.total.committed as f64;
        ok &= out.total.committed == n && out.total.acquire_messages == n * (ncc as u64 + 1);
        lines.push(format!("N_cc={ncc}: {per}/txn"));
    }
    report(2, ok, lines.join(", "));
}

#[test]
fn criterion_03_deadlock_freedom() {
    let _g = serial();
    let n = 100_000u64;
    let micro = MicroConfig { table_size: 100_000, record_size: 100, hot_set_size: 16, ..MicroConfig::default() };
    let hash = PartitionScheme::Hash { seed: 1 };
    let engines = [
        EngineConfig::orthrus(2, 6).with_partition(PartitionMap::new(2, hash)),
        EngineConfig::new(EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree), CORES),
        EngineConfig::new(EngineKind::PStore, CORES).with_partition(PartitionMap::new(CORES, hash)),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for cfg in engines {
        let mut db = Database::new(3);
        db.create_table(TableConfig::new(100_000, 100)).unwrap();
        let feed = Feed::generated(Arc::new(MicroWorkload::new(micro).unwrap()), 11);
        let spec = RunSpec::count(n).with_watchdog(Duration::from_secs(60));
        let t = Instant::now();
        match run(&cfg, Arc::new(db), feed, &spec) {
            Ok(out) => {
                let dl = out.total.aborts[AbortCause::Deadlock.index()] + out.total.aborts[AbortCause::WaitDie.index()];
                ok &= dl == 0 && out.total.committed == n;
                lines.push(format!("{}: {} committed, {dl} deadlock aborts, {:.1}s", cfg.kind, out.total.committed, t.elapsed().as_secs_f64()));
            }
            Err(e) => {
                ok = false;
                lines.push(format!("{}: {e}", cfg.kind));
            }
        }
    }
    report(3, ok, lines.join("; "));
}

fn k(key: u64) -> RecordId {
    RecordId::new(TableId(0), key)
}

/// Transaction `i` is older than transaction `i + 1`.
fn scripted(policy: DeadlockPolicy) -> (LockManager, Vec<TxnLocks>) {
    let lm = LockManager::new(policy, 2, 16).with_sweep_interval(Duration::ZERO);
    let txns = (0..2)
        .map(|i| {
            let mut t = lm.txn_locks(i);
            lm.begin(&mut t, TxnId(i as u64 + 1), Timestamp::new(i as u64 + 1, 0));
            t
        })
        .collect();
    (lm, txns)
}

/// T0 locks A then B, T1 locks B then A; `younger_first` lets T1 make its
/// second request before T0 does. Returns the aborted transactions.
fn two_cycle(policy: DeadlockPolicy, younger_first: bool) -> Vec<usize> {
    let (lm, mut t) = scripted(policy);
    let (a, b) = (k(1), k(2));
    lm.acquire(&mut t[0], a, LockMode::Exclusive).unwrap();
    lm.acquire(&mut t[1], b, LockMode::Exclusive).unwrap();
    let second = if younger_first { [(1, a), (0, b)] } else { [(0, b), (1, a)] };
    let mut aborted = Vec::new();
    for (i, key) in second {
        if lm.acquire(&mut t[i], key, LockMode::Exclusive).unwrap() == AcquireOutcome::AbortDeadlock {
            aborted.push(i);
            lm.release_all(&mut t[i]);
        }
    }
    for _ in 0..4 {
        for i in 0..2 {
            if !aborted.contains(&i) && t[i].is_waiting() && lm.poll(&mut t[i]) == WaitStatus::Deadlock {
                aborted.push(i);
                lm.release_all(&mut t[i]);
            }
        }
    }
    for i in 0..2 {
        if !aborted.contains(&i) {
            lm.release_all(&mut t[i]);
        }
    }
    aborted
}

/// Older T0 holds x and y; younger T1 asks for x. Returns whether T1 aborted.
fn false_positive(policy: DeadlockPolicy) -> bool {
    let (lm, mut t) = scripted(policy);
    lm.acquire(&mut t[0], k(10), LockMode::Exclusive).unwrap();
    lm.acquire(&mut t[0], k(11), LockMode::Exclusive).unwrap();
    if lm.acquire(&mut t[1], k(10), LockMode::Exclusive).unwrap() == AcquireOutcome::AbortDeadlock {
        return true;
    }
    for _ in 0..4 {
        if lm.poll(&mut t[1]) == WaitStatus::Deadlock {
            return true;
        }
    }
    lm.release_all(&mut t[0]);
    lm.poll(&mut t[1]) != WaitStatus::Granted
}

#[test]
fn criterion_04_deadlock_handler_oracles() {
    use DeadlockPolicy::*;
    let mut checks = Vec::new();
    for p in [WaitFor, Dreadlocks] {
        for order in [false, true] {
            checks.push((format!("{} 2-cycle", p.name()), two_cycle(p, order).len() == 1));
        }
    }
    for order in [false, true] {
        checks.push(("wait-die kills younger".to_string(), two_cycle(WaitDie, order) == vec![1]));
    }
    checks.push(("false positive: wait-die aborts".to_string(), false_positive(WaitDie)));
    checks.push(("false positive: wait-for waits".to_string(), !false_positive(WaitFor)));
    checks.push(("false positive: dreadlocks waits".to_string(), !false_positive(Dreadlocks)));
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    report(4, bad.is_empty(), format!("{} scripted outcomes, failing: {bad:?}", checks.len()));
}

#[test]
fn criterion_05_contention_trend() {
    let _g = serial();
    let db = micro_db();
    let hots = [1024u64, 256, 64, 16];
    let mut ok = true;
    let mut ratio = vec![[0.0f64; 3]; hots.len()];
    let mut lines = Vec::new();
    for (i, &hot) in hots.iter().enumerate() {
        let mut t = [0.0; 4];
        for (j, p) in TWO_PL.iter().enumerate() {
            let mut c = timed(EngineKind::TwoPhase(*p), WorkloadKind::MicroRmw);
            c.hot_set = hot;
            t[j] = measure(&c, db).committed_per_s();
        }
        for j in 0..3 {
            ok &= t[3] >= t[j];
            ratio[i][j] = t[3] / t[j].max(1.0);
        }
        lines.push(format!("hot={hot} wf={:.0} wd={:.0} dl={:.0} free={:.0}", t[0], t[1], t[2], t[3]));
    }
    for j in 0..3 {
        ok &= ratio[3][j] > ratio[0][j];
    }
    lines.push(format!(
        "free/dynamic at 1024: {:.2?}, at 16: {:.2?}",
        ratio[0].map(|r| (r * 100.0).round() / 100.0),
        ratio[3].map(|r| (r * 100.0).round() / 100.0)
    ));
    report(5, ok, lines.join("; "));
}

#[test]
fn criterion_06_multipartition_trend() {
    let _g = serial();
    let db = micro_db();
    let engines = [EngineKind::PStore, EngineKind::Orthrus, EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree)];
    let mut t = [[0.0f64; 4]; 3];
    for (e, kind) in engines.iter().enumerate() {
        for parts in 1..=4 {
            let mut c = timed(*kind, WorkloadKind::Multipart);
            c.parts_per_txn = parts;
            t[e][parts - 1] = measure(&c, db).committed_per_s();
        }
    }
    let [ps, or, df] = t;
    let ps_drop = ps[1] / ps[0];
    let or_drop = or[1] / or[0];
    let df_spread = (df.iter().cloned().fold(f64::MIN, f64::max) - df.iter().cloned().fold(f64::MAX, f64::min))
        / df.iter().cloned().fold(f64::MIN, f64::max);
    let ok = ps[0] >= or[0] && ps_drop <= 0.6 && or_drop > ps_drop && df_spread < 0.15;
    report(
        6,
        ok,
        format!(
            "pstore {ps:.0?} orthrus {or:.0?} deadlock-free {df:.0?}; pstore 2/1={ps_drop:.2} orthrus 2/1={or_drop:.2} deadlock-free spread={:.1}%",
            df_spread * 100.0
        ),
    );
}

/// Non-decreasing up to the first point within 10% of the maximum, then
/// flat within 10% of it. Returns the plateau mean.
fn plateau(t: &[f64]) -> Result<f64, String> {
    let max = t.iter().cloned().fold(f64::MIN, f64::max);
    let knee = t.iter().position(|&x| x >= 0.9 * max).unwrap();
    if let Some(i) = (0..knee).find(|&i| t[i + 1] < t[i]) {
        return Err(format!("drop before the knee at point {}", i + 1));
    }
    if let Some(i) = (knee..t.len()).find(|&i| t[i] < 0.9 * max) {
        return Err(format!("point {} falls below the plateau", i + 1));
    }
    Ok(t[knee..].iter().sum::<f64>() / (t.len() - knee) as f64)
}

#[test]
fn criterion_07_thread_allocation() {
    let _g = serial();
    let db = micro_db();
    let mut ok = true;
    let mut plateaus = Vec::new();
    let mut lines = Vec::new();
    for cc in [1usize, 2] {
        let t: Vec<f64> = (1..=6)
            .map(|exec| {
                let mut c = timed(EngineKind::Orthrus, WorkloadKind::MicroRmw);
                c.hot_set = 0;
                c.cc_threads = cc;
                c.exec_threads = Some(exec);
                c.cores = cc + exec;
                measure(&c, db).committed_per_s()
            })
            .collect();
        match plateau(&t) {
            Ok(p) => {
                plateaus.push(p);
                lines.push(format!("C={cc} {t:.0?} plateau={p:.0}"));
            }
            Err(e) => {
                ok = false;
                plateaus.push(0.0);
                lines.push(format!("C={cc} {t:.0?} {e}"));
            }
        }
    }
    ok &= plateaus[1] > plateaus[0];
    report(7, ok, lines.join("; "));
}

#[test]
fn criterion_08_tpcc() {
    let _g = serial();
    let db = tpcc_db();
    let run_at = |kind: EngineKind, cores: usize| {
        let mut c = timed(kind, WorkloadKind::Tpcc);
        c.cores = cores;
        c.cc_threads = (cores / 4).max(1);
        measure(&c, db)
    };
    let kinds = [
        EngineKind::Orthrus,
        EngineKind::TwoPhase(DeadlockPolicy::DeadlockFree),
        EngineKind::TwoPhase(DeadlockPolicy::Dreadlocks),
        EngineKind::TwoPhase(DeadlockPolicy::WaitFor),
        EngineKind::TwoPhase(DeadlockPolicy::WaitDie),
    ];
    let mut hi = Vec::new();
    let mut slope = Vec::new();
    let mut recon = 0.0;
    let mut miss = 0.0;
    for kind in kinds {
        let lo = run_at(kind, 2).committed_per_s();
        let r = run_at(kind, CORES);
        if kind == EngineKind::Orthrus {
            recon = r.recon_fraction(TxnClass::Payment);
            miss = r.aborts(AbortCause::OllpMiss) as f64 / r.committed().max(1) as f64;
        }
        hi.push(r.committed_per_s());
        slope.push((r.committed_per_s() - lo) / (CORES - 2) as f64);
    }
    let order = hi[0] >= hi[1] && hi[1] >= hi[2];
    let worst = slope[3..].iter().chain(&slope[..2]).all(|&s| slope[2] <= s);
    let ok = order && worst && (0.55..=0.65).contains(&recon) && miss < 0.05;
    let names: Vec<String> =
        kinds.iter().zip(&hi).zip(&slope).map(|((k, t), s)| format!("{k}={t:.0} (slope {s:.0}/core)")).collect();
    report(
        8,
        ok,
        format!(
            "W=4 at {CORES} cores: {}; payment reconnaissance {:.1}%, OLLP-miss aborts {:.3}%",
            names.join(" "),
            recon * 100.0,
            miss * 100.0
        ),
    );
}

#[test]
fn criterion_09_breakdown() {
    let _g = serial();
    let db = micro_db();
    let mut ok = true;
    let mut lines = Vec::new();
    for kind in EngineKind::ALL {
        let mut shares = [0.0; 2];
        for (i, high) in [false, true].into_iter().enumerate() {
            let c = if kind == EngineKind::PStore {
                let mut c = timed(kind, WorkloadKind::Multipart);
                c.parts_per_txn = if high { 4 } else { 1 };
                c
            } else {
                let mut c = timed(kind, WorkloadKind::MicroRmw);
                c.hot_set = if high { 16 } else { 0 };
                c
            };
            let r = measure(&c, db);
            for &cov in &r.coverage {
                if !(0.98..=1.02).contains(&cov) {
                    ok = false;
                    lines.push(format!("{kind}: thread coverage {:.1}%", cov * 100.0));
                }
            }
            let sum: f64 = Phase::ALL.iter().map(|&p| r.pct(p)).sum();
            ok &= (sum - 100.0).abs() <= 2.0;
            shares[i] = r.pct(Phase::LockWait) + r.pct(Phase::LockManager);
        }
        ok &= shares[1] > shares[0];
        lines.push(format!("{kind} lock share {:.1}% -> {:.1}%", shares[0], shares[1]));
    }
    report(9, ok, lines.join("; "));
}

#[test]
fn criterion_10_read_only() {
    let _g = serial();
    let db = micro_db();
    let mut cores = Vec::new();
    let mut c = 2;
    while c <= CORES {
        cores.push(c);
        c *= 2;
    }
    let mut orthrus = Vec::new();
    let mut per_core = Vec::new();
    for &n in &cores {
        let mut o = timed(EngineKind::Orthrus, WorkloadKind::Multipart);
        o.read_only = true;
        o.cores = n;
        o.cc_threads = n / 2;
        o.partitions = Some(n / 2);
        orthrus.push(measure(&o, db).committed_per_s());
        let mut t = timed(EngineKind::TwoPhase(DeadlockPolicy::WaitFor), WorkloadKind::MicroReadOnly);
        t.cores = n;
        per_core.push(measure(&t, db).committed_per_s() / n as f64);
    }
    let nondecreasing = orthrus.windows(2).all(|w| w[1] >= 0.9 * w[0]);
    let ok = nondecreasing && per_core.last().unwrap() < &per_core[0];
    report(
        10,
        ok,
        format!("cores {cores:?}: orthrus single-partition {orthrus:.0?}; 2pl hot=64 per core {per_core:.0?}"),
    );
}
