"""Smoke test for the evolvefem Python bindings.

Build and install first, for example:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/evolvefem_py-*.whl
"""

import math

import numpy as np
import scipy.sparse as sp

import evolvefem_py as ef


def check_mesh_and_matrices():
    mesh = ef.Mesh.disk(0.2, degree=2)
    assert mesh.dim == 2 and mesh.degree == 2
    assert mesh.mesh_size() <= 0.2
    pts = np.array(mesh.positions())
    radii = np.linalg.norm(pts[: mesh.n_boundary], axis=1)
    assert np.allclose(radii, 1.0, atol=1e-12)

    rows, cols, vals = mesh.mass_matrix()
    m = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    ones = np.ones(mesh.n_nodes)
    area = ones @ (m @ ones)
    assert abs(area - math.pi) < 1e-4, area

    rows, cols, vals = mesh.stiffness_matrix()
    a = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    assert np.abs(a @ ones).max() < 1e-12 * np.abs(a).max()
    assert abs(a - a.T).max() == 0.0
    print(f"{mesh!r}: area {area:.8f}")


def check_harmonic_extension():
    mesh = ef.Mesh.ball(0.7, degree=1)
    pts = np.array(mesh.positions())
    b = np.array([[0.3, -0.2, 0.1], [0.0, 0.5, 0.2], [-0.4, 0.1, 0.0]])
    c = np.array([0.1, 0.2, -0.3])
    affine = pts @ b.T + c
    v = np.array(mesh.harmonic_extension(affine[: mesh.n_boundary].tolist()))
    err = np.abs(v - affine).max()
    assert err < 1e-9, err
    print(f"{mesh!r}: affine extension deviation {err:.2e}")


def check_experiment_and_slopes():
    result = ef.run_experiment(
        "ex1",
        [("degree", "1"), ("levels", "3"), ("tau", "0.05"), ("tau_ref", "0.01"), ("bdf", "2")],
    )
    csv = result.to_csv()
    assert csv.splitlines()[0] == ef.CSV_HEADER
    slopes = {name: ls for name, _, ls in result.slopes()}
    assert slopes["err_x_LinfH1"] > 0.5, slopes
    assert {name for name, _, _ in ef.eoc_csv(csv)} == set(slopes)
    print("ex1 k=1 slopes:", {k: round(v, 3) for k, v in slopes.items()})

    pairwise, ls = ef.eoc([(0.4, 0.4**3), (0.2, 0.2**3), (0.1, 0.1**3)])
    assert abs(ls - 3.0) < 1e-12 and all(abs(p - 3.0) < 1e-12 for p in pairwise)


def check_suites():
    cases = ef.run_checks("affine", 0)
    assert cases and all(passed for _, _, passed, _ in cases)
    print(f"affine suite: {len(cases)} cases passed")


if __name__ == "__main__":
    check_mesh_and_matrices()
    check_harmonic_extension()
    check_experiment_and_slopes()
    check_suites()
    print("smoke test passed")
