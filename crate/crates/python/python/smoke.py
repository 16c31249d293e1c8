"""Builds the extension, imports it and runs a few operations.

Usage: python3 crates/python/python/smoke.py
"""

import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[3]


def load():
    subprocess.run(["cargo", "build", "--release", "-p", "famlies-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libfamlies_py.so"
    dest = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, dest / "famlies_py.so")
    sys.path.insert(0, str(dest))
    import famlies_py

    return famlies_py


def close(x, y, tol=1e-12):
    return abs(x - y) <= tol * max(1.0, abs(y))


def main():
    fp = load()

    a = fp.Matrix([[4.0, 2.0], [2.0, 3.0]])
    fp.cholesky(a)
    assert close(a[0, 0], 2.0) and close(a[1, 0], 1.0) and close(a[1, 1], 2.0 ** 0.5), a.tolist()

    b = fp.Matrix([[1.0, 2.0], [3.0, 4.0]])
    c = fp.Matrix.zeros(2, 2)
    fp.gemm(1.0, b, b.transposed(), 0.0, c)
    assert c.tolist() == [[5.0, 11.0], [11.0, 25.0]], c.tolist()

    m = fp.Matrix([[0.0, 1.0], [2.0, 3.0]])
    piv = fp.lu(m)
    rhs = fp.Matrix([[1.0], [1.0]])
    fp.lu_solve(m, piv, rhs)
    assert close(rhs[0, 0], -1.0) and close(rhs[1, 0], 1.0), rhs.tolist()

    q = fp.Matrix([[3.0], [4.0]])
    tau = fp.qr(q)
    assert close(abs(q[0, 0]), 5.0) and close(tau[0], 1.6), (q.tolist(), tau)

    x = fp.Matrix([[0, 1, 2, 3], [-1, 0, 4, 5], [-2, -4, 0, 6], [-3, -5, -6, 0]])
    assert close(fp.pfaffian(x), 1 * 6 - 2 * 5 + 3 * 4)

    try:
        fp.cholesky(fp.Matrix([[1.0, 2.0], [2.0, 1.0]]))
    except fp.FactorizationError as e:
        assert "positive definite" in str(e), e
    else:
        raise AssertionError("indefinite matrix accepted")

    trees = fp.ControlTree.enumerate("cholesky", [1, 2, 3], [64, 128], 1)
    assert len(trees) == 18
    t = fp.ControlTree.from_json(trees[0].to_json())
    assert t.descriptor() == trees[0].descriptor()

    ta = fp.Tensor([2, 3], [1, 2, 3, 4, 5, 6])
    tb = fp.Tensor([3], [1, 1, 1])
    tc = fp.Tensor.zeros([2])
    fp.contract("ij,j->i", 1.0, ta, tb, 0.0, tc)
    assert tc.tolist() == [6.0, 15.0], tc.tolist()

    print("famlies_py smoke test passed")


if __name__ == "__main__":
    main()
