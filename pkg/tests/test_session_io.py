import json
import socket
import threading

import numpy as np
import pytest

from markovmix.archive import ArchiveError, config_fingerprint, load_decoder, save_decoder
from markovmix.cli import main as cli_main
from markovmix.config import ConfigError, load_config, parse_config, save_config, standard_benchmark
from markovmix.decoder import MixtureDecoder
from markovmix.sessionlog import SessionLog, TickRecord, TrialRecord
from markovmix.streams import (
    ArrayFrameSource,
    SocketFrameSource,
    read_frames,
    read_frames_csv,
    serve_frames,
    write_frames,
    write_frames_csv,
)


# -- frame streams ---------------------------------------------------------

def test_binary_frame_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.normal(size=(50, 8))
    path = tmp_path / "frames.bin"
    write_frames(path, frames, rate=200.0)
    times, back, rate = read_frames(path)
    assert rate == 200.0
    assert np.array_equal(back, frames)
    assert np.allclose(np.diff(times), 1.0 / 200.0)


def test_csv_frame_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    frames = rng.normal(size=(20, 3))
    path = tmp_path / "frames.csv"
    write_frames_csv(path, frames, rate=100.0)
    times, back = read_frames_csv(path)
    assert np.array_equal(back, frames)  # repr round-trip is exact
    assert times[0] == 0.0


def test_array_source_drains():
    src = ArrayFrameSource(np.ones((25, 2)))
    assert src.take(10).shape == (10, 2)
    assert src.take(10).shape == (10, 2)
    assert src.take(10) is None  # underrun


def test_socket_frame_source():
    rng = np.random.default_rng(2)
    frames = rng.normal(size=(30, 4))
    server = socket.socket()
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    port = server.getsockname()[1]

    def serve():
        conn, _ = server.accept()
        serve_frames(conn, frames, rate=200.0)
        conn.close()

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()
    src = SocketFrameSource("127.0.0.1", port)
    assert src.rate == 200.0
    chunk = src.take(30)
    assert np.array_equal(chunk, frames)
    assert src.take(5) is None  # peer closed
    src.close()
    thread.join()
    server.close()


# -- session logs ------------------------------------------------------------------

def make_small_log():
    log = SessionLog(tick_s=0.1, state_names=("idle", "left_hand", "right_hand"),
                     meta={"phase": "test"})
    rng = np.random.default_rng(3)
    for i in range(7):
        log.ticks.append(
            TickRecord(
                t=(i + 1) * 0.1,
                instructed=i % 3,
                decoded=(i + 1) % 3,
                gamma=rng.dirichlet(np.ones(3)),
                posterior=rng.dirichlet(np.ones(3)),
                y_hat=rng.normal(size=6),
                y_opt=rng.normal(size=6),
                coords=rng.normal(size=6),
                target=[0.1, 0.2, 0.3] if i % 2 else None,
                control_weight=1.0,
            )
        )
    log.trials.append(
        TrialRecord(task_index=1, state=1, state_name="left_hand", target=[0.1, 0.2, 0.3],
                    t_start=0.1, t_end=0.5, hit=True, path_length=0.5, straight_distance=0.4)
    )
    return log


def test_jsonl_roundtrip_bit_exact(tmp_path):
    log = make_small_log()
    path = tmp_path / "log.jsonl"
    log.save_jsonl(path)
    back = SessionLog.load_jsonl(path)
    assert back.tick_s == log.tick_s
    assert back.state_names == log.state_names
    assert np.array_equal(back.y_hat(), log.y_hat())
    assert np.array_equal(back.y_opt(), log.y_opt())
    assert np.array_equal(back.instructed(), log.instructed())
    assert back.trials[0].r_ratio == log.trials[0].r_ratio
    assert back.meta["phase"] == "test"


def test_trials_csv(tmp_path):
    log = make_small_log()
    path = tmp_path / "trials.csv"
    log.save_trials_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("task_index,state,state_name")
    assert len(lines) == 2
    assert "left_hand" in lines[1]


# -- archives ------------------------------------------------------------------------

def trained_decoder():
    rng = np.random.default_rng(4)
    dec = MixtureDecoder([(), (0, 1, 2), (3, 4, 5)], (3, 4), max_factors=3)
    xs = rng.normal(size=(90, 3, 4))
    ys = 0.1 * rng.normal(size=(90, 6))
    zs = rng.integers(0, 3, 90)
    dec.calibrate_update(list(xs), ys, zs)
    dec.decode(xs[0])
    return dec, xs


def test_archive_roundtrip_reproduces_decode(tmp_path):
    dec, xs = trained_decoder()
    path = tmp_path / "model.zip"
    cfg = {"anything": 1}
    save_decoder(path, dec, config=cfg, provenance={"sessions": 2})
    back, manifest = load_decoder(path, config=cfg)
    assert manifest["provenance"]["sessions"] == 2
    assert manifest["provenance"]["n_calibrations"] == 1
    for x in xs[:10]:
        belief = np.full(3, 1 / 3)
        a = dec.decode(x, belief.copy())
        b = back.decode(x, belief.copy())
        assert np.array_equal(a.y_hat, b.y_hat)
        assert np.array_equal(a.gamma, b.gamma)
        assert np.array_equal(a.posterior, b.posterior)


def test_archive_fingerprint_mismatch(tmp_path):
    dec, _ = trained_decoder()
    path = tmp_path / "model.zip"
    save_decoder(path, dec, config={"a": 1})
    with pytest.raises(ArchiveError):
        load_decoder(path, config={"a": 2})
    back, _ = load_decoder(path, config={"a": 2}, allow_mismatch=True)
    assert back.n_states == 3


def test_fingerprint_is_canonical():
    assert config_fingerprint({"a": 1, "b": 2}) == config_fingerprint({"b": 2, "a": 1})


def test_bare_pls_archive_roundtrip(tmp_path):
    from markovmix.archive import load_pls, save_pls
    from markovmix.npls import RecursiveTensorPLS

    rng = np.random.default_rng(6)
    model = RecursiveTensorPLS((3, 4), (2,), max_factors=3, forgetting=0.9)
    xs = rng.normal(size=(60, 3, 4))
    ys = rng.normal(size=(60, 2))
    model.select_factors(xs, ys)
    model.update(xs, ys)
    path = tmp_path / "pls.zip"
    save_pls(path, model)
    back = load_pls(path)
    x = rng.normal(size=(3, 4))
    assert np.array_equal(back.predict(x), model.predict(x))
    assert np.array_equal(back.moment_xx, model.moment_xx)
    assert back.best_factors == model.best_factors
    assert back.forgetting == model.forgetting


# -- config ---------------------------------------------------------------------------

def test_config_roundtrip(tmp_path):
    cfg = standard_benchmark()
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_config_errors_name_the_path(tmp_path):
    with pytest.raises(ConfigError, match="config.decoder.max_factors"):
        parse_config({"decoder": {"max_factors": 0}})
    with pytest.raises(ConfigError, match="config.phases\\[0\\].assist"):
        parse_config({"phases": [{"kind": "train", "assist": 0.5}]})
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config({"bogus": 1})
    with pytest.raises(ConfigError, match="config.layout"):
        parse_config({"layout": "nope"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(bad)


def test_paper_feature_preset():
    cfg = parse_config({"features": {"preset": "paper"}})
    assert cfg.features.feature_shape == (10, 15, 64)


def test_explicit_layout_config():
    cfg = parse_config(
        {
            "layout": {
                "names": ["idle", "arm"],
                "kinds": ["idle", "translation"],
                "masks": [[], [0, 1, 2]],
            }
        }
    )
    assert cfg.layout.output_dim == 3


# -- CLI -------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    cfg = standard_benchmark(train_sessions=2, test_sessions=1)
    cfg_path = out / "cfg.json"
    save_config(cfg, cfg_path)
    code = cli_main(["simulate", "--config", str(cfg_path), "--out", str(out / "run")])
    assert code == 0
    return out


def test_cli_simulate_artifacts(cli_run):
    run = cli_run / "run"
    names = {p.name for p in run.iterdir()}
    assert "decoder.zip" in names
    assert "session_00_train.jsonl" in names
    assert "session_02_test.jsonl" in names
    assert "session_02_test_stream.bin" in names
    assert "session_02_report.json" in names
    report = json.loads((run / "session_02_report.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0


def test_cli_evaluate(cli_run, capsys):
    run = cli_run / "run"
    code = cli_main(
        ["evaluate", "--log", str(run / "session_02_test.jsonl"),
         "--out", str(run / "re_eval.json"), "--csv", str(run / "rows.csv")]
    )
    assert code == 0
    a = json.loads((run / "re_eval.json").read_text())
    b = json.loads((run / "session_02_report.json").read_text())
    assert a == b
    rows = (run / "rows.csv").read_text().strip().splitlines()
    assert rows[0].startswith("n_ticks,")
    assert len(rows) == 2
    # appending accumulates rows for cross-session slope analysis
    assert cli_main(["evaluate", "--log", str(run / "session_02_test.jsonl"),
                     "--csv", str(run / "rows.csv")]) == 0
    assert len((run / "rows.csv").read_text().strip().splitlines()) == 3


def test_cli_replay_is_bit_identical(cli_run, capsys):
    run = cli_run / "run"
    code = cli_main(
        ["replay",
         "--archive", str(run / "decoder.zip"),
         "--stream", str(run / "session_02_test_stream.bin"),
         "--log", str(run / "session_02_test.jsonl"),
         "--config", str(cli_run / "cfg.json")]
    )
    assert code == 0
    assert "bit-identical" in capsys.readouterr().out


def test_cli_inspect_fresh_model(tmp_path, capsys):
    dec = MixtureDecoder([(), (0, 1, 2), (3, 4, 5)], (5, 6, 8), max_factors=4)
    path = tmp_path / "fresh.zip"
    save_decoder(path, dec)
    assert cli_main(["inspect", "--archive", str(path)]) == 0
    out = capsys.readouterr().out
    assert "f*=1" in out          # cold start selects rank 1 everywhere
    assert "0.333  0.333  0.333" in out  # uniform transition rows


def test_cli_error_exit_codes(tmp_path, capsys):
    assert cli_main(["inspect", "--archive", str(tmp_path / "missing.zip")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"bogus": 1}')
    assert cli_main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
