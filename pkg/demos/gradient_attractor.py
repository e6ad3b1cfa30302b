"""Attractor of a gradient system with three equilibria.

With f(s) = s^3 - 0.5 s on an interval of length 2 pi the zero state is
unstable and two nonzero equilibria appear.  The post-burn-in ensemble
cloud collapses onto the Newton-computed equilibrium set and the
semidistance from earlier snapshots to that cloud decays.

    python3 demos/gradient_attractor.py
"""
import numpy as np

from attractor_lab.analysis.experiments import EnsembleSpec, attractor_experiment
from attractor_lab.functionals import energy_E
from attractor_lab.presets import gradient_model, unit_basis
from attractor_lab.solver import SolverConfig, State


def main(count=6, T=120.0, burn_in=60.0):
    basis = unit_basis(32, length=2 * np.pi)
    model = gradient_model()
    spec = EnsembleSpec(count, 7, 5.0, model, basis, SolverConfig(dt=0.01, state_every=50), T)
    rep = attractor_experiment(spec, burn_in, 1.0, equilibria="auto")
    print(f"{len(rep.equilibria)} equilibria found by Newton:")
    for e in rep.equilibria:
        E = energy_E(State(e, basis.zero()), model)
        print(f"  first coefficient {e.coefficients[0]: .6f}, energy {E: .6f}")
    print(f"cloud: {len(rep.cloud)} points, farthest from the equilibrium set: {rep.equilibrium_distance:.3e}")
    print("semidistance to the cloud:")
    for t, d in list(zip(rep.times, rep.semidistance))[::10]:
        print(f"  t = {t:6.1f}: {d:.4e}")
    print(f"trend non-increasing: {rep.trend_ok}")


if __name__ == "__main__":
    main()
