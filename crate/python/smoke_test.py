"""Smoke test for the blockade extension module."""

import blockade


def main():
    p = blockade.SystemParams().calibrated(photons=0.4, detuning=1.0)
    print(p)

    photons, g2 = blockade.cw(p, 1.0)
    assert abs(photons - 0.4) < 1e-3, photons

    g2s = blockade.g2_zero(p, [0.0, 1.5])
    assert g2s[0] > 1.0 > g2s[1], g2s

    tau = blockade.g2_tau(p, 0.0, [0.0, 20.0])
    assert abs(tau[0] - g2s[0]) < 1e-6
    assert abs(tau[1] - 1.0) < 0.2 * abs(tau[0] - 1.0)

    stats = blockade.pulsed(p, 1.5)
    assert stats["mean_photons"] > 0.0 and stats["g2_bar"] > 0.0

    m = blockade.Measurement()
    g2_bar0, g2_bar = blockade.model_g2(p, m, 0.0)
    assert g2_bar0 > 1.0

    clicks = blockade.synthesize(p, m, 0.0, 100_000, seed=3, library_size=2000)
    times = [t for _, t in clicks]
    assert times == sorted(times)
    result = blockade.analyse(clicks)
    value, error = result["g2_bar0"]
    print(f"clicks={len(clicks)} g2_bar0={value:.3f}±{error:.3f} model={g2_bar0:.3f}")
    assert abs(value - g2_bar0) < 5 * error

    print("ok")


if __name__ == "__main__":
    main()
