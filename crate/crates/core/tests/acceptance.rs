//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use hawkesmix::branching::{contraction_certificate, mixing_bound, tail_sum_z, CertificatePolicy, GwLaw};
use hawkesmix::kernel::Kernel;
use hawkesmix::model::HawkesModel;
use hawkesmix::simulate::{rng_for, run_replicates, simulate, RunConfig, Simulator};
use hawkesmix::spectrum::{
    asymptotic_variance_const, variance_curve, variance_st, LinearStatistic, Spectrum, VarianceOptions,
};
use hawkesmix::stats::{clt_harness, ks_two_sample, mixing_decay_diagnostic, DecayConfig, HarnessConfig};

type Outcome = Result<String, String>;

fn exp2() -> HawkesModel {
    HawkesModel::from_masses(vec![1.0, 1.0], &[vec![0.5, 0.3], vec![0.2, 0.4]], |a| Kernel::exponential(a, 2.0))
        .unwrap()
}

fn exp1() -> HawkesModel {
    HawkesModel::new(vec![1.0], vec![vec![Kernel::exponential(0.5, 2.0)]]).unwrap()
}

fn poisson2() -> HawkesModel {
    HawkesModel::new(vec![1.0, 1.0], vec![vec![Kernel::Zero; 2]; 2]).unwrap()
}

fn power1() -> HawkesModel {
    HawkesModel::new(vec![1.0], vec![vec![Kernel::power_law(0.5, 1.0, 2.5)]]).unwrap()
}

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn inter_event_times(events: &[Vec<f64>]) -> Vec<f64> {
    events.iter().flat_map(|e| e.windows(2).map(|w| w[1] - w[0])).collect()
}

fn simulator_agreement() -> Outcome {
    let start = Instant::now();
    let model = exp2();
    let horizon = 1e4;
    let target = 10.0 / 3.0;
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    let mut ok = true;
    for sim in [Simulator::Cluster, Simulator::Thinning] {
        let log = simulate(&model, &RunConfig::new(horizon, 11), sim).map_err(|e| e.to_string())?;
        for (i, e) in log.events.iter().enumerate() {
            let rate = e.len() as f64 / horizon;
            ok &= (rate / target - 1.0).abs() < 0.015;
            lines.push(format!("{sim:?} rate[{i}] = {rate:.4}"));
        }
        gaps.push(inter_event_times(&log.events));
    }
    let (a, b) = gaps.split_at_mut(1);
    let ks = ks_two_sample(&mut a[0], &mut b[0]);
    ok &= ks.p_value > 0.01;
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    let msg = format!("{}; KS D = {:.4}, p = {:.3}; {secs:.1} s", lines.join(", "), ks.statistic, ks.p_value);
    check(ok, msg.clone(), msg)
}

fn min_hermitian_eigenvalue(g: &DMatrix<Complex64>) -> f64 {
    g.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn spectrum_correctness() -> Outcome {
    let mut rng = rng_for(2024, 0);
    let mut worst_eig = f64::INFINITY;
    let mut worst_herm: f64 = 0.0;
    for model in [exp2(), power1()] {
        let spec = Spectrum::new(&model).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let xi = 100.0 * (rng.random::<f64>() - 0.5);
            let g = spec.density(xi).map_err(|e| e.to_string())?;
            worst_herm = worst_herm.max((&g - g.adjoint()).norm());
            worst_eig = worst_eig.min(min_hermitian_eigenvalue(&g));
        }
    }
    let control = Spectrum::new(&poisson2()).map_err(|e| e.to_string())?;
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0); 2]));
    let mut flat = true;
    for _ in 0..1000 {
        let xi = 100.0 * (rng.random::<f64>() - 0.5);
        flat &= control.density(xi).map_err(|e| e.to_string())? == diag;
    }
    let g0 = Spectrum::new(&exp1()).map_err(|e| e.to_string())?.at_zero().map_err(|e| e.to_string())?[(0, 0)];
    let msg = format!(
        "max |γ - γᴴ| = {worst_herm:.1e}, min eigenvalue = {worst_eig:.3e}, control flat = {flat}, γ(0) = {g0:.12}"
    );
    check(worst_herm == 0.0 && worst_eig > -1e-10 && flat && (g0 - 8.0).abs() < 1e-10, msg.clone(), msg)
}

fn variance_linearization() -> Outcome {
    let start = Instant::now();
    let model = exp1();
    let spec = Spectrum::new(&model).map_err(|e| e.to_string())?;
    let stat = LinearStatistic::constant(&[1.0]);
    let limit = asymptotic_variance_const(&spec, &[1.0]).map_err(|e| e.to_string())?;
    let horizons = [1e3, 2e3, 4e3, 8e3];
    let curve = variance_curve(&spec, &stat, &horizons, &VarianceOptions::default()).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = curve.iter().map(|e| e.value / e.horizon).collect();
    let final_dev = (ratios[3] / limit - 1.0).abs();
    let converging = ratios.windows(2).all(|w| (w[1] - limit).abs() <= (w[0] - limit).abs());

    let horizon = 2000.0;
    let spectral = variance_st(&spec, &stat, horizon).map_err(|e| e.to_string())?.value;
    let mean = spec.mean_intensity()[0] * horizon;
    let counts = run_replicates(500, |r| {
        let log = simulate(&model, &RunConfig::new(horizon, 31).stream(r), Simulator::Cluster)?;
        Ok::<_, hawkesmix::simulate::SimError>(log.events[0].len() as f64 - mean)
    })
    .map_err(|e| e.to_string())?;
    let n = counts.len() as f64;
    let avg = counts.iter().sum::<f64>() / n;
    let empirical = counts.iter().map(|c| (c - avg).powi(2)).sum::<f64>() / (n - 1.0);
    let rel = (empirical / spectral - 1.0).abs();
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "Var/T = {:?} -> {limit}, final deviation {:.3}%; empirical Var = {empirical:.1} vs {spectral:.1} ({:.2}%); {secs:.1} s",
        ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
        100.0 * final_dev,
        100.0 * rel
    );
    check(final_dev < 0.02 && converging && rel < 0.05 && secs < 300.0, msg.clone(), msg)
}

struct CltRuns {
    lines: Vec<String>,
    ks_ok: bool,
    cov_ok: bool,
    secs: f64,
}

fn clt_runs() -> Result<CltRuns, String> {
    let start = Instant::now();
    let mut cfg = HarnessConfig::new(2000.0, 1000, 77);
    cfg.grid = vec![0.25, 0.5, 0.75, 1.0];
    let stat = LinearStatistic::constant(&[1.0, 1.0]);
    let mut out = CltRuns { lines: Vec::new(), ks_ok: true, cov_ok: true, secs: 0.0 };
    for (name, model) in [("control", poisson2()), ("hawkes", exp2())] {
        let r = clt_harness(&model, &stat, &cfg).map_err(|e| e.to_string())?;
        out.ks_ok &= r.ks.statistic < 1.628 / 1000f64.sqrt();
        out.cov_ok &= r.max_covariance_deviation < 4.0 / 1000f64.sqrt();
        out.lines.push(format!(
            "{name}: D = {:.4}, max |Cov - min| = {:.4}",
            r.ks.statistic, r.max_covariance_deviation
        ));
    }
    out.secs = start.elapsed().as_secs_f64();
    Ok(out)
}

fn branching_bounds() -> Outcome {
    let law = GwLaw::from_model(&exp2()).map_err(|e| e.to_string())?;
    let cert = contraction_certificate(&law, &CertificatePolicy::default()).map_err(|e| e.to_string())?;
    let runs = 100_000usize;
    let k_max = 10;
    let mut rng = rng_for(606, 0);
    let d = law.dim();
    // paths[z0][r][k] = Z_k for ancestor type z0.
    let paths: Vec<Vec<Vec<Vec<u64>>>> =
        (0..d).map(|z0| (0..runs).map(|_| law.simulate_generations(z0, k_max, &mut rng)).collect()).collect();

    let u = vec![0.2; d];
    let mut worst_z: f64 = 0.0;
    for (z0, sample) in paths.iter().enumerate() {
        for k in 0..=8 {
            let vals: Vec<f64> = sample
                .iter()
                .map(|p| p[k].iter().zip(&u).map(|(&z, &w)| z as f64 * w).sum::<f64>().exp())
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            let exact = law.laplace_zk(&u, k, z0).map_err(|e| e.to_string())?;
            // Z_0 is deterministic; its SE is pure rounding.
            let se = se.max(1e-12 * exact);
            worst_z = worst_z.max((mean - exact).abs() / se);
        }
    }

    let mut contraction = true;
    let mut g = cert.u.clone();
    let mut bound = cert.u.clone();
    for _ in 1..=200 {
        g = law.g(&g);
        bound = (0..d).map(|i| cert.delta * (0..d).map(|j| law.matrix()[(i, j)] * bound[j]).sum::<f64>()).collect();
        contraction &= g.iter().zip(&bound).all(|(a, b)| a <= b);
    }

    let p = 2.0;
    let mut tails_ok = true;
    let mut min_margin = f64::INFINITY;
    for (z0, sample) in paths.iter().enumerate() {
        for k in 0..=k_max {
            for i in 0..d {
                let max = sample.iter().map(|p| p[k][i]).max().unwrap_or(0);
                let mut hist = vec![0usize; max as usize + 1];
                for path in sample {
                    hist[path[k][i] as usize] += 1;
                }
                let mut at_least = runs;
                let mut empirical = 0.0;
                for n in 1..=max as usize {
                    at_least -= hist[n - 1];
                    empirical += (at_least as f64 / runs as f64).powf(1.0 / p);
                }
                let b = tail_sum_z(&law, &cert, k, i, p, Some(z0)).map_err(|e| e.to_string())?;
                tails_ok &= b >= empirical;
                if empirical > 0.0 {
                    min_margin = min_margin.min(b / empirical);
                }
            }
        }
    }
    let msg = format!(
        "max |MC - laplace| = {worst_z:.2} SE; g^k(u) <= delta^k M^k u for k <= 200: {contraction}; \
         min tail bound / empirical = {min_margin:.3}"
    );
    check(worst_z <= 3.0 && contraction && tails_ok, msg.clone(), msg)
}

fn mixing_coherence() -> Outcome {
    let start = Instant::now();
    let model = power1();
    let (beta, gamma) = (1.4, 0.5);
    let lags = [8.0, 16.0, 32.0, 64.0, 128.0];
    let report = mixing_bound(&model, beta, gamma, &lags, &CertificatePolicy::default()).map_err(|e| e.to_string())?;
    let target = 2f64.powf(gamma) * (1.0 - 1e-3);
    let min_ratio =
        report.table.windows(2).map(|w| w[0].bound / w[1].bound).fold(f64::INFINITY, f64::min);

    let cfg = DecayConfig {
        i: 0,
        j: 0,
        window: 1.0,
        lags: vec![10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0, 100.0],
        replicates: 20_000,
        seed: 808,
        beta,
        gamma,
        simulator: Simulator::Cluster,
        burn_in: None,
        policy: CertificatePolicy::default(),
    };
    let decay = mixing_decay_diagnostic(&model, &cfg).map_err(|e| e.to_string())?;
    let slope = decay.model_loglog_slope.unwrap_or(f64::INFINITY);
    let max_share = decay.rows.iter().map(|r| r.empirical / r.bound).fold(f64::NEG_INFINITY, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "min bound(τ)/bound(2τ) = {min_ratio:.6} (need {target:.6}); max empirical/bound = {max_share:.3e}; \
         model slope = {slope:.3} (need <= {:.1}); {secs:.1} s",
        -(1.0 + gamma) + 0.2
    );
    check(
        min_ratio >= target && decay.all_below_bound && slope <= -(1.0 + gamma) + 0.2,
        msg.clone(),
        msg,
    )
}

const DETERMINISM_CONFIG: &str = r#"{
  "model": "model.json",
  "simulate": {"horizon": 200, "seed": 4},
  "spectrum": {"grid": {"start": -5, "stop": 5, "points": 41}},
  "variance": {"statistic": [{"form": "constant", "k": 1}, {"form": "indicator", "start": 0.2, "end": 0.7}],
               "horizons": [50, 100]},
  "mixing": {"beta": 1.4, "gamma": 0.5, "lags": [8, 16, 32]},
  "clt": {"statistic": [{"form": "constant", "k": 1}, {"form": "constant", "k": 1}],
          "horizon": 100, "replicates": 50, "seed": 5, "beta": 4, "delta": 1},
  "decay": {"i": 0, "j": 1, "window": 1, "lags": [3, 6], "replicates": 200, "seed": 6, "beta": 1.4, "gamma": 0.5}
}"#;

const DETERMINISM_MODEL: &str = r#"{"eta": [1.0, 1.0], "kernels": [
  [{"family": "exponential", "alpha": 0.5, "beta": 2.0}, {"family": "exponential", "alpha": 0.3, "beta": 2.0}],
  [{"family": "exponential", "alpha": 0.2, "beta": 2.0}, {"family": "exponential", "alpha": 0.4, "beta": 2.0}]]}"#;

fn run_cli(config: &Path, out: &Path, sub: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hawkesmix"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    // Exit 1 from clt-test or decay reports a failed statistical check, which
    // still writes every artifact.
    match status.status.code() {
        Some(0) | Some(1) if out.join("manifest.json").exists() => Ok(()),
        code => Err(format!("{sub} exited with {code:?}: {}", String::from_utf8_lossy(&status.stderr))),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("model.json"), DETERMINISM_MODEL).map_err(|e| e.to_string())?;
    let config = dir.path().join("config.json");
    std::fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let subs = ["validate", "simulate", "spectrum", "variance", "mixing-bound", "clt-test", "decay"];
    let mut compared = 0;
    let mut diffs = Vec::new();
    for sub in subs {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        run_cli(&config, &a, sub)?;
        run_cli(&config, &b, sub)?;
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        names.sort();
        for name in names {
            compared += 1;
            let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&name)).map_err(|e| e.to_string())?;
            if x != y {
                diffs.push(format!("{sub}/{}", name.to_string_lossy()));
            }
        }
    }
    let msg = format!("{} subcommands, {compared} artifacts compared, differing: {diffs:?}", subs.len());
    check(diffs.is_empty(), msg.clone(), msg)
}

fn main() {
    let mut all = true;
    let mut report = |label: &str, outcome: Outcome| {
        match &outcome {
            Ok(m) => println!("PASS {label}: {m}"),
            Err(m) => println!("FAIL {label}: {m}"),
        }
        all &= outcome.is_ok();
    };
    report("1 simulator agreement", simulator_agreement());
    report("2 spectrum correctness", spectrum_correctness());
    report("3 variance linearization", variance_linearization());
    match clt_runs() {
        Ok(r) => {
            let detail = format!("{}; {:.1} s", r.lines.join("; "), r.secs);
            report("4 CLT", check(r.ks_ok && r.secs < 600.0, detail.clone(), detail.clone()));
            report("5 FCLT covariance", check(r.cov_ok, detail.clone(), detail));
        }
        Err(e) => {
            report("4 CLT", Err(e.clone()));
            report("5 FCLT covariance", Err(e));
        }
    }
    report("6 branching bounds", branching_bounds());
    report("7 mixing bound coherence", mixing_coherence());
    report("8 determinism", determinism());
    if !all {
        std::process::exit(1);
    }
}
