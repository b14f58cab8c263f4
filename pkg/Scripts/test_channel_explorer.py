import io
import json
import logging

import numpy as np
import pandas as pd
import pytest

import channel_explorer
from channel_documents import (TomographyRun, channel_to_document, decode_matrix, document_to_channel,
                               dumps_document, read_document, run_to_document, write_document)
from channels import (KrausSet, amplitude_damping, depolarizing, identity, random_channel, to_choi,
                      to_superop)
from channel_explorer import (EXIT_BAD_INPUT, EXIT_ILL_CONDITIONED, EXIT_NOT_CP, EXIT_OK, EXIT_VERIFY_FAILED,
                              main)
from tomography import computational_povm, qubit_input_set, simulate_probs


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in root.handlers[:]:
        if getattr(handler.formatter, "_fmt", None) == channel_explorer.LOG_FORMAT:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(logging.WARNING)


def save_channel(tmp_path, name, C):
    path = tmp_path / name
    write_document(channel_to_document(C), str(path))
    return str(path)


def superop_error(path, C):
    Phi = document_to_channel(read_document(path))
    return float(np.abs(Phi.matrix - to_superop(C).matrix).max())


# -----------------------------
# convert
# -----------------------------

def test_convert_kraus_to_choi(tmp_path):
    C = amplitude_damping(0.25)
    src = save_channel(tmp_path, "ad.json", C)
    out = str(tmp_path / "ad_choi.json")
    assert main(["convert", "--from", "kraus", "--to", "choi", "--in", src, "--out", out]) == EXIT_OK
    D = document_to_channel(read_document(out))
    assert D.representation == "choi"
    assert np.array_equal(D.matrix, to_choi(C).matrix)


def test_convert_round_trip_is_byte_identical(tmp_path, rng):
    src = save_channel(tmp_path, "phi.json", to_superop(random_channel(3, rng)))
    choi = str(tmp_path / "choi.json")
    back = str(tmp_path / "back.json")
    assert main(["convert", "--from", "superop", "--to", "choi", "--in", src, "--out", choi]) == EXIT_OK
    assert main(["convert", "--from", "choi", "--to", "superop", "--in", choi, "--out", back]) == EXIT_OK
    with open(src, "rb") as a, open(back, "rb") as b:
        assert a.read() == b.read()


def test_convert_extracts_kraus_operators(tmp_path, capsys):
    src = save_channel(tmp_path, "dep.json", to_choi(depolarizing(2, 0.5)))
    out = str(tmp_path / "kraus.json")
    assert main(["convert", "--from", "choi", "--to", "kraus", "--in", src, "--out", out]) == EXIT_OK
    assert "lambda_min =" in capsys.readouterr().err
    K = document_to_channel(read_document(out))
    assert isinstance(K, KrausSet)
    assert len(K.operators) == 4


def test_transpose_map_has_no_kraus_form(tmp_path, capsys):
    src = str(tmp_path / "transpose.json")
    assert main(["dump", "channel", "transpose", "2", "--out", src]) == EXIT_OK
    assert read_document(src)["type"] == "choi"
    code = main(["convert", "--from", "choi", "--to", "kraus", "--in", src, "--out", str(tmp_path / "k.json")])
    assert code == EXIT_NOT_CP
    assert "lambda_min" in capsys.readouterr().err
    assert not (tmp_path / "k.json").exists()


def test_convert_reads_stdin_and_writes_stdout(monkeypatch, capsys):
    text = dumps_document(channel_to_document(identity(2)))
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    assert main(["convert", "--from", "kraus", "--to", "superop"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["type"] == "superop"
    assert np.array_equal(decode_matrix(doc["matrices"][0]), np.eye(4))


def test_convert_rejects_mismatched_type(tmp_path):
    src = save_channel(tmp_path, "id.json", identity(2))
    assert main(["convert", "--from", "choi", "--to", "superop", "--in", src]) == EXIT_BAD_INPUT


# -----------------------------
# verify
# -----------------------------

def test_verify_channel(tmp_path, capsys):
    src = save_channel(tmp_path, "dep.json", depolarizing(3, 0.2))
    assert main(["verify", "--in", src]) == EXIT_OK
    out = capsys.readouterr().out
    assert "cp" in out and "True" in out

    assert main(["verify", "--in", src, "--json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["cp"] is True and report["tp"] is True and report["unital"] is True
    assert report["choi_rank"] == 9


def test_verify_fails_for_non_channels(tmp_path, capsys):
    shrink = save_channel(tmp_path, "shrink.json", KrausSet(dim=2, operators=(0.5 * np.eye(2),)))
    assert main(["verify", "--in", shrink, "--json"]) == EXIT_VERIFY_FAILED
    report = json.loads(capsys.readouterr().out)
    assert report["cp"] is True and report["tp"] is False

    transpose = str(tmp_path / "t.json")
    main(["dump", "channel", "transpose", "3", "--out", transpose])
    assert main(["verify", "--in", transpose, "--json"]) == EXIT_VERIFY_FAILED
    report = json.loads(capsys.readouterr().out)
    assert report["cp"] is False
    assert report["min_eigenvalue"] == pytest.approx(-1.0)


def test_verify_writes_log_file(tmp_path):
    src = save_channel(tmp_path, "id.json", identity(2))
    log_file = tmp_path / "Logs" / "channel_explorer.log"
    assert main(["verify", "--in", src, "--log-level", "INFO", "--log-file", str(log_file)]) == EXIT_OK
    assert "channel_explorer.channels" in log_file.read_text()


# -----------------------------
# tomo
# -----------------------------

@pytest.mark.parametrize("extra", [[], ["--measure", "outputs"], ["--scheme", "eapt"]])
def test_tomography_round_trip(tmp_path, rng, capsys, extra):
    C = random_channel(2, rng)
    src = save_channel(tmp_path, "c.json", C)
    run = str(tmp_path / "run.json")
    rec = str(tmp_path / "rec.json")
    assert main(["tomo", "simulate", "--in", src, "--out", run] + extra) == EXIT_OK
    assert main(["tomo", "reconstruct", "--in", run, "--out", rec]) == EXIT_OK
    assert superop_error(rec, C) < 1e-10
    assert "cp" in capsys.readouterr().err


def test_aapt_round_trip(tmp_path, rng):
    C = random_channel(2, rng)
    src = save_channel(tmp_path, "c.json", C)
    run = str(tmp_path / "run.json")
    rec = str(tmp_path / "rec.json")
    assert main(["tomo", "simulate", "--scheme", "aapt", "--in", src, "--out", run]) == EXIT_OK
    assert main(["tomo", "reconstruct", "--scheme", "aapt", "--in", run, "--out", rec]) == EXIT_OK
    assert superop_error(rec, C) < 1e-8

    run3 = str(tmp_path / "run3.json")
    assert main(["tomo", "simulate", "--scheme", "aapt", "--ancilla-dim", "3", "--in", src, "--out", run3]) == 0
    assert main(["tomo", "reconstruct", "--in", run3, "--out", rec]) == EXIT_OK
    assert superop_error(rec, C) < 1e-8


def test_aapt_with_product_input_is_ill_conditioned(tmp_path, rng, capsys):
    src = save_channel(tmp_path, "c.json", random_channel(2, rng))
    run = str(tmp_path / "run.json")
    assert main(["tomo", "simulate", "--scheme", "aapt", "--product", "--in", src, "--out", run]) == EXIT_OK
    assert main(["tomo", "reconstruct", "--in", run, "--out", str(tmp_path / "rec.json")]) == EXIT_ILL_CONDITIONED
    assert "condition number" in capsys.readouterr().err


def test_reconstruct_with_incomplete_povm(tmp_path, capsys):
    tset, povm = qubit_input_set(), computational_povm(2)
    run = TomographyRun(scheme="spt", dim=2, inputs=tset, povm=povm,
                        probabilities=simulate_probs(amplitude_damping(0.4), tset, povm))
    src = str(tmp_path / "run.json")
    rec = str(tmp_path / "rec.json")
    write_document(run_to_document(run), src)
    assert main(["tomo", "reconstruct", "--in", src, "--out", rec]) == EXIT_ILL_CONDITIONED
    capsys.readouterr()

    assert main(["tomo", "reconstruct", "--in", src, "--out", rec, "--pinv"]) == EXIT_OK
    assert "pseudo-dual" in capsys.readouterr().err
    Phi = document_to_channel(read_document(rec))
    assert Phi.dim == 2
    # rows mapping onto output populations are reproduced exactly
    expected = to_superop(amplitude_damping(0.4)).matrix
    assert np.abs(Phi.matrix[[0, 3]] - expected[[0, 3]]).max() < 1e-12


@pytest.mark.parametrize("scheme", ["aapt", "eapt"])
def test_shots_are_ignored_for_joint_schemes(tmp_path, rng, capsys, scheme):
    src = save_channel(tmp_path, "c.json", random_channel(2, rng))
    run = str(tmp_path / "run.json")
    argv = ["tomo", "simulate", "--scheme", scheme, "--shots", "100", "--in", src, "--out", run]
    assert main(argv) == EXIT_OK
    assert "--shots is ignored" in capsys.readouterr().err
    assert "shots" not in read_document(run)


def test_spt_for_a_qutrit(tmp_path, rng):
    C = random_channel(3, rng)
    src = save_channel(tmp_path, "c.json", C)
    run = str(tmp_path / "run.json")
    rec = str(tmp_path / "rec.json")
    assert main(["tomo", "simulate", "--in", src, "--out", run, "--seed", "5"]) == EXIT_OK
    assert main(["tomo", "reconstruct", "--in", run, "--out", rec]) == EXIT_OK
    assert superop_error(rec, C) < 1e-8


def test_simulation_with_shots_is_deterministic(tmp_path, rng):
    src = save_channel(tmp_path, "c.json", random_channel(2, rng))
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    args = ["tomo", "simulate", "--in", src, "--shots", "1000", "--seed", "11"]
    assert main(args + ["--out", a]) == EXIT_OK
    assert main(args + ["--out", b]) == EXIT_OK
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()
    doc = read_document(a)
    assert doc["kind"] == "frequencies"
    assert doc["shots"] == 1000


def test_simulation_exports_csv(tmp_path):
    src = save_channel(tmp_path, "id.json", identity(2))
    csv = tmp_path / "tables" / "probs.csv"
    assert main(["tomo", "simulate", "--in", src, "--out", str(tmp_path / "run.json"), "--csv", str(csv)]) == 0
    frame = pd.read_csv(csv, index_col=0)
    assert list(frame.index) == ["M0", "M1", "M2", "M3"]
    assert np.allclose(frame.sum(axis=0), 1.0)


def test_reconstruct_from_bell_state_document(tmp_path):
    bell = str(tmp_path / "bell.json")
    rec = str(tmp_path / "rec.json")
    assert main(["dump", "bell", "--d", "2", "--out", bell]) == EXIT_OK
    assert main(["tomo", "reconstruct", "--in", bell, "--out", rec]) == EXIT_OK
    Phi = document_to_channel(read_document(rec))
    assert np.abs(Phi.matrix - np.eye(4)).max() < 1e-15


def test_reconstruct_rejects_scheme_mismatch(tmp_path, rng):
    src = save_channel(tmp_path, "c.json", random_channel(2, rng))
    run = str(tmp_path / "run.json")
    main(["tomo", "simulate", "--scheme", "eapt", "--in", src, "--out", run])
    assert main(["tomo", "reconstruct", "--scheme", "spt", "--in", run, "--out", "-"]) == EXIT_BAD_INPUT


# -----------------------------
# dump
# -----------------------------

def test_dump_swap(capsys):
    assert main(["dump", "swap", "--r", "2", "--p", "3"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["type"] == "matrix"
    assert doc["name"] == "swap"
    assert doc["params"] == {"r": 2, "p": 3}
    expected = np.zeros((6, 6))
    expected[[0, 2, 4, 1, 3, 5], np.arange(6)] = 1
    assert np.array_equal(decode_matrix(doc["matrices"][0]), expected)


def test_dump_trivial_reshuffle_is_identity(capsys):
    assert main(["dump", "reshuffle", "--p", "1", "--q", "1", "--r", "2", "--s", "3"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert np.array_equal(decode_matrix(doc["matrices"][0]), np.eye(6))


def test_dump_bell(capsys):
    assert main(["dump", "bell", "--d", "2"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["type"] == "state"
    assert doc["dims"] == [2, 2]
    M = decode_matrix(doc["matrices"][0])
    for i in (0, 3):
        for j in (0, 3):
            assert M[i, j] == 0.5
    assert np.abs(M).sum() == 2.0


def test_dump_standard_channel(capsys):
    assert main(["dump", "channel", "depolarizing", "2", "0.3"]) == EXIT_OK
    C = document_to_channel(json.loads(capsys.readouterr().out))
    assert np.abs(to_superop(C).matrix - to_superop(depolarizing(2, 0.3)).matrix).max() < 1e-15


# -----------------------------
# Errors
# -----------------------------

def test_malformed_documents_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["verify", "--in", str(bad)]) == EXIT_BAD_INPUT
    bad.write_text("not json at all")
    assert main(["verify", "--in", str(bad)]) == EXIT_BAD_INPUT
    assert main(["verify", "--in", str(tmp_path / "missing.json")]) == EXIT_BAD_INPUT
    assert main(["dump", "channel", "depolarizing", "2", "1.5"]) == EXIT_BAD_INPUT


@pytest.mark.parametrize("argv", [
    [],
    ["convert", "--from", "bogus", "--to", "choi"],
    ["dump", "swap", "--r", "0", "--p", "2"],
    ["dump", "channel", "nonexistent"],
    ["tomo", "simulate", "--shots", "-5"],
])
def test_bad_flags_exit_2(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    assert excinfo.value.code == 2
