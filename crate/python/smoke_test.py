"""Smoke test for the Python extension.

Build and install first:
    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""

import math
import os
import tempfile

import transcoder as tc


def main():
    code = tc.Code("hamming_7_4")
    assert (code.n, code.k) == (7, 4)
    msg = [1, 0, 1, 1]
    word = code.encode(msg)
    assert code.is_codeword(word)
    assert code.message_of(word) == msg

    sigma = tc.sigma_from_ebn0(4.0, 0.5)
    assert abs(sigma - 0.6309) < 1e-4
    llr = tc.channel_llr(tc.bpsk(word), 0.8)
    assert code.decode(llr, decoder="bp", iters=5) == word

    ldpc = tc.Code("ldpc_121_60")
    assert tc.flops("bp", ldpc, iters=50) == 36300

    counts, dists = tc.distance_histogram(code, pairs=1000, bins=10)
    assert sum(counts) == 120
    assert all(abs(d * d * 7 - round(d * d * 7)) < 1e-9 for d in dists)

    rec = tc.simulate(code, [3.0], decoder="bp", iters=5, min_errors=20, min_frames=500, seed=1)[0]
    assert rec["frames"] >= 500 and rec["block_errors"] >= 20
    assert abs(rec["minus_ln_bler"] + math.log(rec["bler"])) < 1e-9

    model = tc.TransCoder(7, seed=1)
    losses = model.train(code, epochs=3, batch=32, modules="full", runs=2, iters_per_run=2)
    assert len(losses) == 3 and all(math.isfinite(v) for v in losses)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        again = tc.TransCoder.load(path)
        assert again.num_params == model.num_params
    out = model.evaluate(code, [2.0], modules="full", runs=2, iters=3, min_errors=5, min_frames=200, max_frames=2000, calibration_frames=500)
    assert out[0]["pipeline"] == "full/2xbp-3"
    print("python smoke test ok")


if __name__ == "__main__":
    main()
