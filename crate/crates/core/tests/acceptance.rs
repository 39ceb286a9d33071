mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use faircomp::experiments::{run_scenario, Scenario};

struct Item {
    name: &'static str,
    result: Check,
    elapsed: Duration,
}

fn timed(name: &'static str, f: fn() -> Check) -> Item {
    let start = Instant::now();
    let result = f();
    Item {
        name,
        result,
        elapsed: start.elapsed(),
    }
}

fn within(x: f64, lo: f64, hi: f64, what: &str) -> Result<(), String> {
    if (lo..=hi).contains(&x) {
        Ok(())
    } else {
        Err(format!("{what} {x:.4} outside [{lo}, {hi}]"))
    }
}


fn two_event_study() -> Vec<Item> {
    let start = Instant::now();
    let scenario = Scenario::from_toml_str(include_str!("../scenarios/pizza_or_seminar.toml")).expect("bundled scenario parses");
    let out = match run_scenario(&scenario) {
        Ok(out) => out,
        Err(e) => {
            return vec![Item {
                name: "study runs",
                result: Err(e.to_string()),
                elapsed: start.elapsed(),
            }]
        }
    };
    let elapsed = start.elapsed();
    let row = |c: &str, t: &str| out.row(c, t).cloned().ok_or(format!("missing row {c} / {t}"));
    let util = |c: &str, t: &str| out.utility_row(c, t).cloned().ok_or(format!("missing utility row {c} / {t}"));

    let preferred = || -> Check {
        let mut parts = Vec::new();
        for (c, t) in [("tiebreak(u,pizza)=0", "seminar"), ("tiebreak(u,pizza)=1", "pizza")] {
            let r = row(c, t)?;
            if r.pct_pairs_violating != 0.0 || r.universes_with_violations != 0 {
                return Err(format!("{c} / {t}: {}% of pairs violate", r.pct_pairs_violating));
            }
            parts.push(format!("{t} 0 pairs"));
        }
        Ok(parts.join(", "))
    };
    let non_preferred = || -> Check {
        let mut parts = Vec::new();
        for (c, t) in [("tiebreak(u,pizza)=0", "pizza"), ("tiebreak(u,pizza)=1", "seminar")] {
            let r = row(c, t)?;
            let avg = r.avg_violation.ok_or(format!("{c} / {t}: no violations"))?;
            let max = r.max_violation.ok_or(format!("{c} / {t}: no violations"))?;
            within(r.pct_pairs_violating, 5.0, 50.0, "violating %")?;
            within(avg, 0.01, 0.15, "mean excess")?;
            within(max, 0.15, 0.55, "max excess")?;
            parts.push(format!("{t} {:.2}% / {avg:.4} / {max:.4}", r.pct_pairs_violating));
        }
        Ok(parts.join(", "))
    };
    let equal_rho = || -> Check {
        let (p, s) = (row("tiebreak(u,pizza)=.5", "pizza")?, row("tiebreak(u,pizza)=.5", "seminar")?);
        if p.pct_pairs_violating > 0.0 && s.pct_pairs_violating > 0.0 {
            Ok(format!("pizza {:.2}%, seminar {:.2}%", p.pct_pairs_violating, s.pct_pairs_violating))
        } else {
            Err("a task shows no violations".into())
        }
    };
    let rtc = || -> Check {
        let mut parts = Vec::new();
        for t in ["pizza", "seminar"] {
            let r = row("randomize_then_classify", t)?;
            let u = util("randomize_then_classify", t)?;
            let err = u.identity_error.ok_or("no identity error recorded")?;
            if r.pct_pairs_violating != 0.0 || err > 1e-9 {
                return Err(format!("{t}: {}% violating, identity error {err:e}", r.pct_pairs_violating));
            }
            parts.push(format!("{t} loss {:.4}, identity error {err:.1e}", u.loss));
        }
        Ok(parts.join(", "))
    };
    let boost = || -> Check {
        let mut parts = Vec::new();
        for t in ["pizza", "seminar"] {
            let plain = util("randomize_then_classify", t)?.loss;
            let boosted = util("randomize_then_classify+0.1", t)?.loss;
            within(boosted, 0.30, 0.50, "boosted loss")?;
            if boosted >= plain {
                return Err(format!("{t}: boost does not reduce loss ({boosted} vs {plain})"));
            }
            parts.push(format!("{t} {plain:.3} -> {boosted:.3}"));
        }
        Ok(parts.join(", "))
    };
    let runtime = || -> Check {
        if elapsed < Duration::from_secs(600) {
            Ok(format!("{} universes x {} elements", scenario.universes, scenario.population.size))
        } else {
            Err("over 10 minutes".into())
        }
    };
    vec![
        Item {
            name: "runtime under 10 minutes",
            result: runtime(),
            elapsed,
        },
        Item {
            name: "preferred task has no violating pairs",
            result: preferred(),
            elapsed: Duration::ZERO,
        },
        Item {
            name: "non-preferred task within bands",
            result: non_preferred(),
            elapsed: Duration::ZERO,
        },
        Item {
            name: "equal tie-break violates both tasks",
            result: equal_rho(),
            elapsed: Duration::ZERO,
        },
        Item {
            name: "randomize-then-classify fair with exact allocation",
            result: rtc(),
            elapsed: Duration::ZERO,
        },
        Item {
            name: "boost reduces loss into [30%, 50%]",
            result: boost(),
            elapsed: Duration::ZERO,
        },
    ]
}

fn report(title: &str, items: &[Item], limit: Option<Duration>) -> bool {
    let mut ok = true;
    let total: Duration = items.iter().map(|i| i.elapsed).sum();
    let mut lines = Vec::new();
    for item in items {
        let mut result = item.result.clone();
        if let (Some(l), Ok(_)) = (limit, &result) {
            if item.elapsed > l {
                result = Err(format!("took {:.2?}, limit {l:?}", item.elapsed));
            }
        }
        let (mark, msg) = match &result {
            Ok(m) => ("pass", m.clone()),
            Err(e) => {
                ok = false;
                ("FAIL", e.clone())
            }
        };
        lines.push(format!("    {mark}  {} ({:.2?}): {msg}", item.name, item.elapsed));
    }
    println!("{} {title} ({total:.2?})", if ok { "PASS" } else { "FAIL" });
    for l in lines {
        println!("{l}");
    }
    ok
}

fn main() -> ExitCode {
    let exact = vec![
        timed("OR divergence", or_divergence),
        timed("bimodal parity under OR twice", bimodal_parity),
        timed("constrained cohort feasibility", constrained_feasibility),
        timed("PTC group counterexample", ptc_group_counterexample),
        timed("weighted-sampling pair coefficient", ws_coefficient),
    ];
    let c1 = report("criterion 1: exact worked numbers", &exact, Some(Duration::from_secs(1)));

    let oracle_start = Instant::now();
    let oracles = vec![
        timed("PTC Monte Carlo vs exact", ptc_monte_carlo),
        timed("weighted-sampling chi-squared", ws_chi_squared),
        timed("optimizer vs grid oracle", lp_vs_grid),
        timed("threshold vs outcome enumeration", threshold_vs_enumeration),
    ];
    let mut c2 = report("criterion 2: oracle equivalence", &oracles, None);
    if oracle_start.elapsed() > Duration::from_secs(60) {
        println!("    FAIL  suites took {:.2?}, limit 60s", oracle_start.elapsed());
        c2 = false;
    }

    let props = vec![
        timed("fair construction", prop_build_fair),
        timed("randomize-then-classify", prop_rtc),
        timed("permute-then-classify bound", prop_ptc),
        timed("weighted sampling under precondition", prop_ws),
        timed("copy-behavior extension", prop_copy_behavior),
        timed("heavy OR", prop_heavy_or),
        timed("OR and AND witnesses", prop_functional_witnesses),
        timed("competitive witness", prop_competitive_witness),
        timed("unrelated groups keep parity", prop_unrelated_groups),
        timed("shift witness breaks parity", prop_alpha_witness),
        timed("online cohort, unknown length", prop_online_unknown_length),
    ];
    let c3 = report("criterion 3: property suites", &props, None);

    let c4 = report("criterion 4: two-event study at full scale", &two_event_study(), None);

    if c1 && c2 && c3 && c4 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
