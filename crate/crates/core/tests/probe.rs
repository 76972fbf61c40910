// Scratch sizing probe; not part of the suite. Delete before finishing.
use std::time::Instant;

use levychaos_core::chaos::{project_cloud, ProductChaosPlan};
use levychaos_core::noise::{sample_cloud, DomainBox};
use levychaos_core::pinning::{
    continuum_pinning_kernel, disordered_pinning_z, make_kernel, PinningParams,
};
use levychaos_core::polymer::{
    llt_sup_error, mc_max_excursion, ContinuumPolymerProxy, DisorderField, PolymerDp,
    PolymerParams, StableWalk, WindowMode,
};
use levychaos_core::rng::{purpose, Stream};
use levychaos_core::stats::{ks_distance, SampleSet};
use levychaos_core::tail::{sample_disorder, truncated_moment_ratio, TailLaw};

fn s(master: u64, p: u64, ix: u64) -> Stream {
    Stream::new(master, p, ix)
}

#[test]
#[ignore]
fn probe_truncated_ratio_noise() {
    let law = TailLaw::one_sided(1.5).unwrap();
    for seed in 0..4u64 {
        let t0 = Instant::now();
        let rp =
            truncated_moment_ratio(&law, 1.2, 1.0, 1e-4, 100_000_000, s(seed, purpose::MC_ORACLE, 7))
                .unwrap();
        let rq =
            truncated_moment_ratio(&law, 1.8, 1.0, 1e-4, 100_000_000, s(seed, purpose::MC_ORACLE, 7))
                .unwrap();
        println!("seed {seed}: p-ratio {rp:.5} q-ratio {rq:.5}  ({:?})", t0.elapsed());
    }
}

#[test]
#[ignore]
fn probe_pinning_ladder_timing() {
    let law = TailLaw::one_sided(1.5).unwrap();
    for n in [256usize, 4096, 8192] {
        let t0 = Instant::now();
        let kr = make_kernel(0.7, n).unwrap();
        let build = t0.elapsed();
        let params = PinningParams::from_targets(&kr, &law, n, 0.5, 0.5, false).unwrap();
        let t1 = Instant::now();
        let mut acc = 0.0;
        for r in 0..10u64 {
            let omega = sample_disorder(&law, n, s(10, purpose::DISORDER, r));
            acc += disordered_pinning_z(&kr, &params, &omega).unwrap();
        }
        println!(
            "pinning N={n}: kernel build {build:?}, 10 replicas {:?} (acc {acc:.3})",
            t1.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_pinning_proxy_and_ks() {
    let law = TailLaw::one_sided(1.5).unwrap();
    let domain = DomainBox::interval(0.0, 1.0).unwrap();
    let kernel = continuum_pinning_kernel(0.7, 0.5).unwrap();
    let mesh = 1024usize;
    let lattice = levychaos_core::chaos::Lattice::mesh_cells(&domain, mesh).unwrap();
    let t0 = Instant::now();
    let plan = ProductChaosPlan::new(&kernel, &lattice, 1).unwrap();
    println!("plan build mesh {mesh}: {:?}", t0.elapsed());

    let reps = 1500usize;
    let t1 = Instant::now();
    let mut proxy_vals = Vec::with_capacity(reps);
    let mut negatives = 0usize;
    for r in 0..reps {
        let cloud = sample_cloud(&domain, 1.5, 1.0, 0.0, 0.05, s(20, purpose::CLOUD, r as u64))
            .unwrap();
        let (_, field) = project_cloud(&cloud, mesh).unwrap();
        let z = plan.evaluate_full(&field, 1.0, 0.5).unwrap();
        if z < 0.0 {
            negatives += 1;
        }
        proxy_vals.push(z);
    }
    println!("proxy {reps} reps: {:?}; negatives {negatives}", t1.elapsed());
    let p = SampleSet::new("proxy", proxy_vals).unwrap();
    println!(
        "proxy: median {:.4} q10 {:.4} q90 {:.4} mean {:.4} pnorm1.2 {:.4}",
        p.median(),
        p.quantile(0.1),
        p.quantile(0.9),
        p.mean(),
        p.p_norm(1.2)
    );

    for n in [256usize, 1024, 4096] {
        let kr = make_kernel(0.7, n).unwrap();
        let params = PinningParams::from_targets(&kr, &law, n, 0.5, 0.5, false).unwrap();
        let t2 = Instant::now();
        let disc: Vec<f64> = (0..reps)
            .map(|r| {
                let omega = sample_disorder(&law, n, s(30, purpose::DISORDER, r as u64));
                disordered_pinning_z(&kr, &params, &omega).unwrap()
            })
            .collect();
        let dt = t2.elapsed();
        let d = SampleSet::new("disc", disc).unwrap();
        println!(
            "N={n}: KS {:.4}; median {:.4} mean {:.4} pnorm1.2 {:.4} ({dt:?})",
            ks_distance(&d, &p).unwrap(),
            d.median(),
            d.mean(),
            d.p_norm(1.2)
        );
    }
}

#[test]
#[ignore]
fn probe_pinning_proxy_orders() {
    let domain = DomainBox::interval(0.0, 1.0).unwrap();
    let kernel = continuum_pinning_kernel(0.7, 0.5).unwrap();
    for mesh in [256usize, 1024] {
        let lattice = levychaos_core::chaos::Lattice::mesh_cells(&domain, mesh).unwrap();
        let order_max = 10usize;
        let plan = ProductChaosPlan::new(&kernel, &lattice, order_max).unwrap();
        let reps = 2000usize;
        let mut per_order: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); order_max + 1];
        let mut totals = Vec::with_capacity(reps);
        for r in 0..reps {
            let cloud =
                sample_cloud(&domain, 1.5, 1.0, 0.0, 0.05, s(20, purpose::CLOUD, r as u64))
                    .unwrap();
            let (_, field) = project_cloud(&cloud, mesh).unwrap();
            let res = plan.evaluate(&field, 1.0, 0.5).unwrap();
            for (k, v) in res.per_order.iter().enumerate() {
                per_order[k].push(v.abs());
            }
            totals.push(res.total);
        }
        let med: Vec<f64> = per_order
            .iter()
            .map(|v| {
                let mut u = v.clone();
                u.sort_by(|a, b| a.partial_cmp(b).unwrap());
                u[reps / 2]
            })
            .collect();
        let q90: Vec<f64> = per_order
            .iter()
            .map(|v| {
                let mut u = v.clone();
                u.sort_by(|a, b| a.partial_cmp(b).unwrap());
                u[(reps * 9) / 10]
            })
            .collect();
        let t = SampleSet::new("tot", totals).unwrap();
        println!("mesh {mesh}: per-order MEDIAN |X_k| {med:.4?}");
        println!("mesh {mesh}: per-order q90    |X_k| {q90:.4?}");
        println!(
            "mesh {mesh}: total median {:.4} q10 {:.4} q90 {:.4} mean {:.4}",
            t.median(),
            t.quantile(0.1),
            t.quantile(0.9),
            t.mean()
        );
        // Partial sums for three replicas, to see per-realization settling.
        for r in 0..3usize {
            let cloud =
                sample_cloud(&domain, 1.5, 1.0, 0.0, 0.05, s(20, purpose::CLOUD, r as u64))
                    .unwrap();
            let (_, field) = project_cloud(&cloud, mesh).unwrap();
            let res = plan.evaluate(&field, 1.0, 0.5).unwrap();
            let mut acc = 0.0;
            let partials: Vec<f64> = res
                .per_order
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect();
            println!("mesh {mesh} rep {r}: partial sums {partials:.4?}");
        }
    }
}

#[test]
#[ignore]
fn probe_pinning_ks_full_scale() {
    let law = TailLaw::one_sided(1.5).unwrap();
    let domain = DomainBox::interval(0.0, 1.0).unwrap();
    let kernel = continuum_pinning_kernel(0.7, 0.5).unwrap();
    let mesh = 1024usize;
    let lattice = levychaos_core::chaos::Lattice::mesh_cells(&domain, mesh).unwrap();
    let plan = ProductChaosPlan::new(&kernel, &lattice, 1).unwrap();

    let proxy_reps = 20_000usize;
    let t0 = Instant::now();
    let proxy_vals: Vec<f64> = (0..proxy_reps)
        .map(|r| {
            let cloud =
                sample_cloud(&domain, 1.5, 1.0, 0.0, 0.05, s(21, purpose::CLOUD, r as u64))
                    .unwrap();
            let (_, field) = project_cloud(&cloud, mesh).unwrap();
            plan.evaluate_full(&field, 1.0, 0.5).unwrap()
        })
        .collect();
    println!("proxy {proxy_reps} reps: {:?}", t0.elapsed());
    // Norm estimator spread across 4 disjoint 5000-rep shards.
    for shard in 0..4 {
        let vals = proxy_vals[shard * 5000..(shard + 1) * 5000].to_vec();
        let sh = SampleSet::new("shard", vals).unwrap();
        println!("  proxy shard {shard}: pnorm1.2 {:.4} median {:.4}", sh.p_norm(1.2), sh.median());
    }
    let p = SampleSet::new("proxy", proxy_vals).unwrap();
    println!("proxy all: pnorm1.2 {:.4} median {:.4} mean {:.4}", p.p_norm(1.2), p.median(), p.mean());

    let reps = 5000usize;
    for n in [256usize, 512, 1024, 2048, 4096] {
        let kr = make_kernel(0.7, n).unwrap();
        let params = PinningParams::from_targets(&kr, &law, n, 0.5, 0.5, false).unwrap();
        let t2 = Instant::now();
        let disc: Vec<f64> = (0..reps)
            .map(|r| {
                let omega = sample_disorder(&law, n, s(31, purpose::DISORDER, r as u64));
                disordered_pinning_z(&kr, &params, &omega).unwrap()
            })
            .collect();
        let dt = t2.elapsed();
        let h1 = SampleSet::new("h1", disc[..2500].to_vec()).unwrap();
        let h2 = SampleSet::new("h2", disc[2500..].to_vec()).unwrap();
        let d = SampleSet::new("disc", disc).unwrap();
        println!(
            "N={n}: KS {:.4}; pnorm1.2 {:.4} (halves {:.4}/{:.4}) mean {:.4} ({dt:?})",
            ks_distance(&d, &p).unwrap(),
            d.p_norm(1.2),
            h1.p_norm(1.2),
            h2.p_norm(1.2),
            d.mean()
        );
    }
}

#[test]
#[ignore]
fn probe_polymer_ladder_timing() {
    let walk = StableWalk::new(1.5).unwrap();
    let law = TailLaw::one_sided(1.4).unwrap();
    for n in [128usize, 512, 1024] {
        let params = PolymerParams::from_targets(&walk, &law, n, 0.5, 4.0, false).unwrap();
        let t0 = Instant::now();
        let dp = PolymerDp::hard(&walk, &params).unwrap();
        let build = t0.elapsed();
        let t1 = Instant::now();
        let mut acc = 0.0;
        for r in 0..5u64 {
            let field = DisorderField::sample(&law, n, dp.window(), s(40, purpose::FIELD, r))
                .unwrap();
            acc += dp.normalized(&field).unwrap();
        }
        println!(
            "polymer N={n} window {}: build {build:?}, 5 replicas {:?} (acc {acc:.3}, beta {:.4})",
            dp.window(),
            t1.elapsed(),
            params.beta
        );
    }
}

#[test]
#[ignore]
fn probe_polymer_proxy_and_ks() {
    let walk = StableWalk::new(1.5).unwrap();
    let law = TailLaw::one_sided(1.4).unwrap();
    let t0 = Instant::now();
    let proxy = ContinuumPolymerProxy::new(1.5, &law, 0.5, 4.0, 0.05, 192, 0.025).unwrap();
    println!("proxy build: {:?}; hom mass {:.5}", t0.elapsed(), proxy.expected_mass());
    let reps = 200usize;
    let t1 = Instant::now();
    let pvals: Vec<f64> =
        (0..reps).map(|r| proxy.sample(s(50, purpose::CLOUD, r as u64)).unwrap()).collect();
    println!("proxy {reps} reps: {:?}", t1.elapsed());

    let n = 128usize;
    let params = PolymerParams::from_targets(&walk, &law, n, 0.5, 4.0, false).unwrap();
    let dp = PolymerDp::hard(&walk, &params).unwrap();
    let t2 = Instant::now();
    let dvals: Vec<f64> = (0..reps)
        .map(|r| {
            let field =
                DisorderField::sample(&law, n, dp.window(), s(60, purpose::FIELD, r as u64))
                    .unwrap();
            dp.normalized(&field).unwrap()
        })
        .collect();
    println!("discrete N={n} {reps} reps: {:?}", t2.elapsed());
    let d = SampleSet::new("disc", dvals).unwrap();
    let p = SampleSet::new("proxy", pvals).unwrap();
    println!(
        "KS(N=128, proxy) = {:.4}; means {:.4} vs {:.4}",
        ks_distance(&d, &p).unwrap(),
        d.mean(),
        p.mean()
    );
}

#[test]
#[ignore]
fn probe_polymer_ks_full_scale() {
    let walk = StableWalk::new(1.5).unwrap();
    let law = TailLaw::one_sided(1.4).unwrap();
    let reps = 2000usize;
    let t0 = Instant::now();
    let proxy = ContinuumPolymerProxy::new(1.5, &law, 0.5, 4.0, 0.05, 192, 0.025).unwrap();
    let pvals: Vec<f64> =
        (0..reps).map(|r| proxy.sample(s(51, purpose::CLOUD, r as u64)).unwrap()).collect();
    let p = SampleSet::new("proxy", pvals).unwrap();
    println!(
        "proxy {reps}: {:?}; median {:.4} mean {:.4} q10 {:.4} q90 {:.4}",
        t0.elapsed(),
        p.median(),
        p.mean(),
        p.quantile(0.1),
        p.quantile(0.9)
    );
    for n in [128usize, 256, 512, 1024] {
        let params = PolymerParams::from_targets(&walk, &law, n, 0.5, 4.0, false).unwrap();
        let dp = PolymerDp::hard(&walk, &params).unwrap();
        let t1 = Instant::now();
        let dvals: Vec<f64> = (0..reps)
            .map(|r| {
                let field =
                    DisorderField::sample(&law, n, dp.window(), s(91, purpose::FIELD, r as u64))
                        .unwrap();
                dp.normalized(&field).unwrap()
            })
            .collect();
        let d = SampleSet::new("disc", dvals).unwrap();
        println!(
            "N={n}: KS {:.4}; median {:.4} mean {:.4} ({:?})",
            ks_distance(&d, &p).unwrap(),
            d.median(),
            d.mean(),
            t1.elapsed()
        );
    }
}

#[test]
#[ignore]
fn probe_llt_timing() {
    let walk = StableWalk::new(1.5).unwrap();
    for n in [256usize, 2048] {
        let t0 = Instant::now();
        let e = llt_sup_error(&walk, n).unwrap();
        println!("llt n={n}: sup {e:.5} in {:?}", t0.elapsed());
    }
}

#[test]
#[ignore]
fn probe_moment_shape() {
    let law = TailLaw::one_sided(1.5).unwrap();
    let kernel = continuum_pinning_kernel(0.7, 0.0).unwrap();
    for seed in [0u64, 1, 2] {
        let mut all_ratios: Vec<Vec<f64>> = Vec::new();
        for n in [128usize, 256, 512] {
            let v = 1.0 / n as f64;
            let big_v = levychaos_core::tail::solve_noise_scale(&law, v).unwrap();
            let sites: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * v).collect();
            let lattice = levychaos_core::chaos::Lattice::new(1, sites, v, big_v).unwrap();
            let t0 = Instant::now();
            let report = levychaos_core::chaos::empirical_moment_bound_check(
                &kernel,
                6,
                &law,
                &lattice,
                1.0,
                1.2,
                1.8,
                2000,
                s(60 + seed, purpose::DISORDER, 0),
            )
            .unwrap();
            println!(
                "seed {seed} n={n}: r2 {:.4} rate {:.4} ratios {:?} ({:?})",
                report.r2,
                report.rate,
                report.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
                t0.elapsed()
            );
            all_ratios.push(report.ratios);
        }
        for k in 0..6 {
            let col: Vec<f64> = all_ratios.iter().map(|r| r[k]).collect();
            let hi = col.iter().cloned().fold(f64::MIN, f64::max);
            let lo = col.iter().cloned().fold(f64::MAX, f64::min);
            println!("  seed {seed} order {}: spread {:.3}", k + 1, hi / lo);
        }
    }
}

#[test]
#[ignore]
fn probe_martingale() {
    use levychaos_core::noise::refine_cloud;
    let domain = DomainBox::interval(0.0, 1.0).unwrap();
    let kernel = continuum_pinning_kernel(0.7, 0.0).unwrap();
    let mesh = 512usize;
    let lattice = levychaos_core::chaos::Lattice::mesh_cells(&domain, mesh).unwrap();
    let plan = ProductChaosPlan::new(&kernel, &lattice, 6).unwrap();
    let levels = [0.5, 0.2, 0.1, 0.05];
    let reps = 20_000usize;
    let t0 = Instant::now();
    let mut z = vec![Vec::with_capacity(reps); 4];
    for r in 0..reps {
        let mut cloud =
            sample_cloud(&domain, 1.5, 1.0, 0.0, levels[0], s(70, purpose::CLOUD, r as u64))
                .unwrap();
        for (j, &a) in levels.iter().enumerate() {
            if j > 0 {
                cloud = refine_cloud(&cloud, a, s(71 + j as u64, purpose::REFINE, r as u64))
                    .unwrap();
            }
            let (_, field) = project_cloud(&cloud, mesh).unwrap();
            z[j].push(plan.evaluate(&field, 1.0, 1.0).unwrap().total);
        }
    }
    println!("{reps} reps x 4 levels: {:?}", t0.elapsed());
    let z0 = SampleSet::new("z0", z[0].clone()).unwrap();
    for j in 0..3 {
        let d: Vec<f64> = (0..reps).map(|r| z[j + 1][r] - z[j][r]).collect();
        let ds = SampleSet::new("d", d.clone()).unwrap();
        let dm = ds.mean();
        let zm = z0.mean();
        let prods: Vec<f64> =
            (0..reps).map(|r| (d[r] - dm) * (z[0][r] - zm)).collect();
        let ps = SampleSet::new("prod", prods).unwrap();
        println!(
            "increment {j}: mean {:.4} se {:.4} ({:.2} se); cov {:.4} se {:.4} ({:.2} se)",
            dm,
            ds.se(),
            dm.abs() / ds.se(),
            ps.mean(),
            ps.se(),
            ps.mean().abs() / ps.se()
        );
    }
    for j in 0..4 {
        let sj = SampleSet::new("z", z[j].clone()).unwrap();
        println!("level a={}: pnorm1.2 {:.4} mean {:.4}", levels[j], sj.p_norm(1.2), sj.mean());
    }
}

#[test]
#[ignore]
fn probe_truncation_and_relevance() {
    use levychaos_core::polymer::suggest_free_window;
    // Truncation gap at N=512.
    let walk = StableWalk::new(1.5).unwrap();
    let law = TailLaw::one_sided(1.4).unwrap();
    let n = 512usize;
    let free_radius = suggest_free_window(&walk, n);
    println!("free radius {free_radius}");
    let t0 = Instant::now();
    let reps = 150usize;
    for a_mult in [2.0f64, 4.0, 8.0] {
        let params = PolymerParams::from_targets(&walk, &law, n, 0.5, a_mult, false).unwrap();
        let hard = PolymerDp::hard(&walk, &params).unwrap();
        let free = PolymerDp::free(&walk, &params, free_radius).unwrap();
        let mut gaps = Vec::with_capacity(reps);
        for r in 0..reps {
            let field = DisorderField::sample(
                &law,
                n,
                free_radius as i64,
                s(80, purpose::FIELD, r as u64),
            )
            .unwrap();
            let zf = free.run(&field).unwrap().z;
            let za = hard.run(&field).unwrap().z;
            gaps.push(zf - za);
        }
        let gap = SampleSet::new("gap", gaps).unwrap();
        let threshold = (a_mult * walk.scale(n)).ceil() as i64;
        let (p, p_se) = mc_max_excursion(&walk, n, threshold, 20_000, s(81, purpose::WALK, 0));
        println!(
            "A={a_mult}: gap mean {:.5} bound {:.5} (p {:.5} se {:.5})",
            gap.mean(),
            p + 3.0 * (p_se + gap.se()),
            p,
            p_se
        );
    }
    println!("truncation: {:?}", t0.elapsed());

    // Pinning relevance at N=8192.
    let plaw = TailLaw::one_sided(1.5).unwrap();
    let n = 8192usize;
    let kr = make_kernel(0.7, n).unwrap();
    let t1 = Instant::now();
    let bhat_weak = (n as f64).powf(-0.2);
    let params_w = PinningParams::from_targets(&kr, &plaw, n, 0.0, bhat_weak, false).unwrap();
    let weak: Vec<f64> = (0..800)
        .map(|r| {
            let omega = sample_disorder(&plaw, n, s(82, purpose::DISORDER, r as u64));
            disordered_pinning_z(&kr, &params_w, &omega).unwrap()
        })
        .collect();
    let w = SampleSet::new("weak", weak).unwrap();
    println!(
        "pinning weak (bhat {bhat_weak:.4}, beta {:.5}): mean {:.4} se {:.4} median {:.4} ({:?})",
        params_w.beta,
        w.mean(),
        w.se(),
        w.median(),
        t1.elapsed()
    );
    let t2 = Instant::now();
    let params_s = levychaos_core::pinning::PinningParams::from_raw(n, 0.0, 0.5).unwrap();
    let strong: Vec<f64> = (0..400)
        .map(|r| {
            let omega = sample_disorder(&plaw, n, s(83, purpose::DISORDER, r as u64));
            disordered_pinning_z(&kr, &params_s, &omega).unwrap()
        })
        .collect();
    let st = SampleSet::new("strong", strong).unwrap();
    println!(
        "pinning strong (beta 0.5): median {:.4} q90 {:.4} ({:?})",
        st.median(),
        st.quantile(0.9),
        t2.elapsed()
    );

    // Polymer relevance at N=1024.
    let n = 1024usize;
    let t3 = Instant::now();
    let bhat_weak = (n as f64).powf(-0.2);
    let params_w = PolymerParams::from_targets(&walk, &law, n, bhat_weak, 2.0, false).unwrap();
    let dp = PolymerDp::hard(&walk, &params_w).unwrap();
    let weak: Vec<f64> = (0..300)
        .map(|r| {
            let field =
                DisorderField::sample(&law, n, dp.window(), s(84, purpose::FIELD, r as u64))
                    .unwrap();
            dp.normalized(&field).unwrap()
        })
        .collect();
    let w = SampleSet::new("weak", weak).unwrap();
    println!(
        "polymer weak (bhat {bhat_weak:.4}): mean {:.4} se {:.4} ({:?})",
        w.mean(),
        w.se(),
        t3.elapsed()
    );
    let t4 = Instant::now();
    let params_s = PolymerParams::from_raw(n, 0.5, 2.0, &law).unwrap();
    let dp = PolymerDp::hard(&walk, &params_s).unwrap();
    let strong: Vec<f64> = (0..300)
        .map(|r| {
            let field =
                DisorderField::sample(&law, n, dp.window(), s(85, purpose::FIELD, r as u64))
                    .unwrap();
            dp.normalized(&field).unwrap()
        })
        .collect();
    let st = SampleSet::new("strong", strong).unwrap();
    println!(
        "polymer strong (beta 0.5): median {:.4} q90 {:.4} ({:?})",
        st.median(),
        st.quantile(0.9),
        t4.elapsed()
    );
}

#[test]
#[ignore]
fn probe_free_window_timing() {
    let walk = StableWalk::new(1.5).unwrap();
    let law = TailLaw::one_sided(1.4).unwrap();
    let n = 512usize;
    let params = PolymerParams::from_targets(&walk, &law, n, 0.5, 2.0, false).unwrap();
    // Mirror of the module's suggestion rule at the 1e-3 defect budget.
    let radius = 8_800usize;
    let t0 = Instant::now();
    let dp = PolymerDp::free(&walk, &params, radius).unwrap();
    println!(
        "free build N={n} radius {radius}: {:?}; defect {:?}",
        t0.elapsed(),
        dp.defect()
    );
    let t1 = Instant::now();
    for r in 0..3u64 {
        let field =
            DisorderField::sample(&law, n, radius as i64, s(70, purpose::FIELD, r)).unwrap();
        let _ = dp.run(&field).unwrap();
    }
    println!("free 3 replicas: {:?}", t1.elapsed());
    let _ = WindowMode::HardWindow;
}
