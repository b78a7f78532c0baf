"""Shared fixtures: an offline guard and a small end-to-end stack."""

import socket
from types import SimpleNamespace

import pytest

from logcascade.casebank import build_casebank, partition_validation
from logcascade.gateway import OracleGateway, ScriptedGateway
from logcascade.pipeline import Dependencies
from logcascade.predictor import PredictorConfig, train_reference
from logcascade.prompting import display_label
from logcascade.retrieval import HashedNgramEmbedder
from logcascade.synth import SynthConfig, synthesize_corpus, synthetic_task_spec
from logcascade.uncertainty import calibrate_variation


class NetworkDisabled(RuntimeError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkDisabled("network access attempted during the test suite")


@pytest.fixture(scope="session", autouse=True)
def no_network():
    """Hard-fail any DNS lookup or TCP connect; the suite runs offline."""
    saved = (socket.getaddrinfo, socket.create_connection)
    socket.getaddrinfo = _refuse
    socket.create_connection = _refuse
    yield NetworkDisabled
    socket.getaddrinfo, socket.create_connection = saved


ANALYSIS_REPLY = (
    "Reason: the window mixes marker tokens from more than one class, so "
    "frequency alone points the wrong way.\n"
    "Pitfall: counting shared filler tokens as evidence."
)


def build_stack(n_samples=240, corpus_seed=7, train_seed=101, calib_seed=202, n_passes=10):
    """Corpus, trained model, calibration, and case bank in one bundle.

    Deterministic for fixed arguments, so tests can pin observed values.
    """
    synth_cfg = SynthConfig(
        n_samples=n_samples, n_classes=2, noise_rate=0.15, separability=0.9, seed=corpus_seed
    )
    split = synthesize_corpus(synth_cfg)
    task = synthetic_task_spec(synth_cfg)
    model = train_reference(split.train, PredictorConfig(seed=train_seed), task)
    correct, errors, err = partition_validation(model, split.validation)
    calibration = calibrate_variation(
        model, correct, n_passes=n_passes, seed=calib_seed, error_rate=err
    )
    embedder = HashedNgramEmbedder()
    analyst = ScriptedGateway({"default": ANALYSIS_REPLY})
    bank = build_casebank(errors, analyst, embedder, task)
    return SimpleNamespace(
        synth_cfg=synth_cfg,
        split=split,
        task=task,
        model=model,
        validation_errors=errors,
        calibration=calibration,
        embedder=embedder,
        bank=bank,
    )


def oracle_for(stack, wrong_rate=0.0, seed=0):
    truth = {s.sample_id: display_label(s) for s in stack.split.all_samples()}
    return OracleGateway(truth, stack.task.label_space, wrong_rate=wrong_rate, seed=seed)


def deps_for(stack, gateway=None):
    return Dependencies(
        model=stack.model,
        calibration=stack.calibration,
        bank=stack.bank,
        embedder=stack.embedder,
        gateway=gateway or oracle_for(stack),
        task=stack.task,
    )


@pytest.fixture(scope="session")
def stack():
    return build_stack()
