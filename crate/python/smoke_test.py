"""Quick end-to-end check of the Python bindings."""

import math

import faircomp as fc


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


def main():
    metric = fc.TaskMetric.uniform(2, 0.49)
    c = fc.SoftClassifier([0.5, 0.01])
    assert fc.audit_individual_fairness(metric, c.probabilities).passes()

    twice = fc.compose_or([c, c])
    assert close(twice[0], 0.75) and close(twice[1], 0.0199)
    report = fc.audit_individual_fairness(metric, twice)
    assert not report.passes()
    assert close(report.max_excess(), 0.2401)
    kind, u, v, observed, allowed, excess = report.violations[0]
    assert (kind, u, v) == ("pair", 0, 1)

    line = fc.TaskMetric.abs_diff([0.0, 0.5, 1.0])
    best = fc.optimize_fair_classifier(line, [0.0, 0.5, 1.0], 1.0)
    assert fc.audit_individual_fairness(line, best.probabilities).passes()
    assert close(best.allocation(), 1.0, 1e-9)

    first = fc.SoftClassifier([0.6, 0.6])
    second = fc.SoftClassifier([0.5, 0.5])
    rows = fc.compose_competitive([first, second], fc.TieBreaker.prefer(1, 2))
    assert close(rows[0][0], 0.3) and close(rows[0][1], 0.5)
    rtc = fc.randomize_then_classify([first, second], [0.5, 0.5])
    assert close(sum(r[0] for r in rtc), 0.6)

    ptc = fc.ptc_selection_probabilities(fc.SoftClassifier([0.75, 1.0, 0.5]), 1)
    assert close(ptc[0][0], 0.3125)
    assert close((ptc[1][0] + ptc[2][0]) / 2, 0.34375)

    feas = fc.check_constrained_feasibility(100, 1000, 550, 0.15, [(0.4, 0.25), (0.5, 0.1), (0.1, 0.0)])
    assert close(feas["slack"], 0.15) and close(feas["p_max"], 700 / 6050)
    assert not feas["feasible"]

    parity = fc.audit_conditional_parity([0, 0, 1, 1], [0, 0, 0, 0], [0.9375, 0.9375, 1.0, 0.75])
    assert close(parity.max_excess(), 0.0625)

    try:
        fc.SoftClassifier([1.5])
    except fc.FaircompError:
        pass
    else:
        raise AssertionError("out-of-range probability accepted")

    assert "0.9375 vs 0.875" in fc.run_demo("bimodal-parity")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
