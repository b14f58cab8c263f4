import json

import numpy as np
import pytest

import tomography
from channel_documents import (DocumentError, TomographyRun, channel_to_document, decode_matrix,
                               document_to_channel, document_to_run, document_to_state, dumps_document,
                               encode_matrix, loads_document, matrix_document, read_document,
                               run_to_document, state_document, write_document)
from channels import (ChoiMatrix, KrausSet, Superoperator, amplitude_damping, random_channel, to_choi,
                      to_superop)


def reparse(doc):
    return loads_document(dumps_document(doc))


def test_encode_matrix_layout():
    M = np.array([[1 + 2j, 0.1], [-3j, 1e-300]])
    encoded = encode_matrix(M)
    assert encoded == [[[1.0, 2.0], [0.1, 0.0]], [[0.0, -3.0], [1e-300, 0.0]]]
    assert np.array_equal(decode_matrix(encoded), M)


def test_encode_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        encode_matrix(np.zeros(3))
    with pytest.raises(ValueError):
        encode_matrix(np.array([[np.nan]]))


@pytest.mark.parametrize("bad", [
    [],
    [[1.0, 2.0]],
    [[[1.0, 0.0]], [[1.0, 0.0], [2.0, 0.0]]],
    [[[1.0, 0.0, 0.0]]],
    [[["a", 0.0]]],
    "matrix",
])
def test_decode_matrix_rejects_malformed(bad):
    with pytest.raises(DocumentError):
        decode_matrix(bad)


def test_channel_documents_round_trip_exactly(rng):
    K = random_channel(3, rng)
    for C in (K, to_choi(K), to_superop(K)):
        doc = reparse(channel_to_document(C))
        assert doc["type"] == C.representation
        assert doc["dim"] == 3
        back = document_to_channel(doc)
        assert type(back) is type(C)
        if isinstance(C, KrausSet):
            assert all(np.array_equal(a, b) for a, b in zip(back.operators, C.operators))
        else:
            assert np.array_equal(back.matrix, C.matrix)


def test_serialization_is_byte_stable(rng):
    doc = channel_to_document(to_superop(random_channel(2, rng)))
    text = dumps_document(doc)
    assert dumps_document(loads_document(text)) == text
    assert text.endswith("\n")


def test_floats_survive_serialization_exactly():
    M = np.array([[0.1 + 0.2, 1 / 3], [2 ** -1074, -np.pi * 1j], [1e308 + 1e-308j, np.nextafter(1.0, 2.0)]])
    text = dumps_document(matrix_document(M, "floats", {}))
    assert "0.30000000000000004" in text
    assert np.array_equal(decode_matrix(loads_document(text)["matrices"][0]), M)


def test_document_to_channel_errors():
    good = channel_to_document(amplitude_damping(0.2))
    with pytest.raises(DocumentError, match="channel document"):
        document_to_channel(dict(good, type="matrix"))
    with pytest.raises(DocumentError, match="dim"):
        document_to_channel(dict(good, dim=0))
    with pytest.raises(DocumentError, match="dim"):
        document_to_channel(dict(good, dim=True))
    with pytest.raises(DocumentError):
        document_to_channel(dict(good, dim=3))
    with pytest.raises(DocumentError, match="exactly one"):
        document_to_channel(dict(good, type="choi", matrices=good["matrices"]))
    with pytest.raises(DocumentError):
        document_to_channel(dict(good, matrices=[]))
    # wrong shape for the declared dimension
    choi = channel_to_document(ChoiMatrix(dim=2, matrix=np.eye(4)))
    with pytest.raises(DocumentError):
        document_to_channel(dict(choi, type="superop", dim=3))


def test_loads_document_checks_version_and_json():
    with pytest.raises(DocumentError, match="format_version"):
        loads_document(json.dumps({"format_version": "2", "type": "kraus"}))
    with pytest.raises(DocumentError, match="format_version"):
        loads_document(json.dumps({"type": "kraus"}))
    with pytest.raises(DocumentError, match="JSON"):
        loads_document("{not json")
    with pytest.raises(DocumentError, match="object"):
        loads_document("[1, 2]")


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        dumps_document({"format_version": "1", "x": float("nan")})


def test_matrix_document():
    doc = matrix_document(np.eye(4, dtype=np.int64), "swap", {"r": 2, "p": 2})
    assert doc["type"] == "matrix"
    assert doc["params"] == {"r": 2, "p": 2}
    assert doc["dim"] == 4
    assert decode_matrix(doc["matrices"][0]).shape == (4, 4)


def test_state_document_round_trip(rng):
    tau = tomography.random_joint_pure_state(2, 3, rng)
    doc = reparse(state_document(tau))
    assert doc["dims"] == [2, 3]
    back = document_to_state(doc)
    assert (back.d1, back.d2) == (2, 3)
    assert np.array_equal(back.matrix, tau.matrix)

    with pytest.raises(DocumentError):
        document_to_state(dict(doc, dims=[3, 3]))
    with pytest.raises(DocumentError):
        document_to_state(dict(doc, dims=[2]))
    with pytest.raises(DocumentError):
        document_to_state(channel_to_document(amplitude_damping(0.1)))


# -----------------------------
# Tomography runs
# -----------------------------

def probs_run(rng, shots=None):
    C = random_channel(2, rng)
    tset, meas = tomography.qubit_input_set(), tomography.tetrahedral_povm()
    m = tomography.simulate_probs(C, tset, meas, shots=shots, seed=1)
    return TomographyRun(scheme="spt", dim=2, inputs=tset, povm=meas, probabilities=m)


def test_probs_run_round_trip(rng):
    run = probs_run(rng)
    doc = reparse(run_to_document(run))
    assert doc["kind"] == "probabilities"
    assert doc["shots"] is None
    back = document_to_run(doc)
    assert back.path == "probs"
    assert np.array_equal(back.probabilities.entries, run.probabilities.entries)
    assert all(np.array_equal(a, b) for a, b in zip(back.inputs.states, run.inputs.states))


def test_frequency_run_keeps_shots(rng):
    doc = reparse(run_to_document(probs_run(rng, shots=500)))
    assert doc["kind"] == "frequencies"
    assert doc["shots"] == 500
    back = document_to_run(doc)
    assert back.probabilities.shots == (500,) * 4

    with pytest.raises(DocumentError, match="kind"):
        document_to_run(dict(doc, shots=None))


def test_outputs_and_joint_runs_round_trip(rng):
    C = random_channel(2, rng)
    tset = tomography.qubit_input_set()
    run = TomographyRun(scheme="spt", dim=2, inputs=tset, outputs=tomography.simulate_outputs(C, tset))
    back = document_to_run(reparse(run_to_document(run)))
    assert back.path == "outputs"
    assert all(np.array_equal(a, b) for a, b in zip(back.outputs, run.outputs))

    tau_in = tomography.random_joint_pure_state(2, 2, rng)
    run = TomographyRun(scheme="aapt", dim=2, joint_in=tau_in,
                        joint_out=tomography.simulate_joint_output(C, tau_in))
    back = document_to_run(reparse(run_to_document(run)))
    assert back.path == "aapt"
    assert np.array_equal(back.joint_out.matrix, run.joint_out.matrix)

    tau_out = tomography.simulate_joint_output(C, tomography.maximally_entangled_state(2))
    back = document_to_run(reparse(run_to_document(TomographyRun(scheme="eapt", dim=2, joint_out=tau_out))))
    assert back.path == "eapt"
    assert back.joint_in is None


def test_run_needs_exactly_one_path(rng):
    doc = run_to_document(probs_run(rng))
    with pytest.raises(DocumentError, match="exactly the fields"):
        document_to_run({k: v for k, v in doc.items() if k != "povm"})
    with pytest.raises(DocumentError, match="exactly the fields"):
        document_to_run(dict(doc, outputs=doc["inputs"]))
    with pytest.raises(DocumentError, match="exactly the fields"):
        document_to_run(dict(doc, scheme="eapt"))
    with pytest.raises(DocumentError, match="scheme"):
        document_to_run(dict(doc, scheme="qpt"))


def test_run_rejects_invalid_contents(rng):
    doc = run_to_document(probs_run(rng))
    bad_probs = [row[:] for row in doc["probabilities"]]
    bad_probs[0][0] += 0.5
    with pytest.raises(DocumentError):
        document_to_run(dict(doc, probabilities=bad_probs))
    with pytest.raises(DocumentError):
        document_to_run(dict(doc, inputs=doc["inputs"][:3]))

    tau = tomography.maximally_entangled_state(3)
    eapt = run_to_document(TomographyRun(scheme="eapt", dim=3, joint_out=tau))
    with pytest.raises(DocumentError, match="does not match"):
        document_to_run(dict(eapt, dim=2))


def test_read_and_write_files(tmp_path, rng, capsys):
    doc = channel_to_document(Superoperator(dim=2, matrix=np.eye(4)))
    path = tmp_path / "nested" / "id.json"
    write_document(doc, str(path))
    assert read_document(str(path)) == reparse(doc)
    assert path.read_text(encoding="utf-8") == dumps_document(doc)

    write_document(doc, "-")
    assert capsys.readouterr().out == dumps_document(doc)

    with pytest.raises(DocumentError, match="No such document"):
        read_document(str(tmp_path / "missing.json"))
