import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gansentinel.simulator import Scenario, ScenarioKind, blob_distribution, simulate_images, simulate_losses
from gansentinel.telemetry import (
    ImageSet, LossKind, LossRecord, LossSeries, TelemetryError, emit_loss_log, find_snapshot_dirs,
    iter_loss_records, load_image_dir, load_image_set, parse_loss_log, read_image, read_pgm, slice_window,
    write_image_set, write_pgm,
)


def _pgm(path, w, h, fill):
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + bytes([fill]) * (w * h))
    return path


def test_minimal_jsonl():
    src = b'{"epoch":0,"g_loss":0.69,"d_loss":0.70}\n{"epoch":1,"g_loss":0.72,"d_loss":0.66}'
    s = parse_loss_log(io.BytesIO(src))
    assert len(s) == 2
    assert s.epochs.tolist() == [0, 1]
    assert s.g.tolist() == [0.69, 0.72]


def test_string_nan_names_line_and_field():
    src = ('{"epoch":0,"g_loss":0.69,"d_loss":0.70}\n'
           '{"epoch":1,"g_loss":0.72,"d_loss":0.66}\n'
           '{"epoch":2,"g_loss":"NaN","d_loss":0.66}\n')
    with pytest.raises(TelemetryError, match=r"line 3.*g_loss"):
        parse_loss_log(io.StringIO(src))


@pytest.mark.parametrize("literal", ["NaN", "Infinity", "-Infinity"])
def test_bare_non_finite_literal_rejected(literal):
    src = '{"epoch":0,"g_loss":0.5,"d_loss":%s}\n' % literal
    with pytest.raises(TelemetryError, match=r"line 1.*d_loss"):
        parse_loss_log(io.StringIO(src))


@pytest.mark.parametrize("src, message", [
    ("", "empty"),
    ('{"epoch":0,"g_loss":1,"d_loss":1}\n{"epoch":0,"g_loss":1,"d_loss":1}\n', "duplicate"),
    ('{"epoch":0,"g_loss":1}\n', "missing field d_loss"),
    ("not json\n", "line 1"),
    ('{"epoch":-1,"g_loss":1,"d_loss":1}\n', "epoch"),
    ('{"epoch":1.5,"g_loss":1,"d_loss":1}\n', "epoch"),
])
def test_malformed_logs(src, message):
    with pytest.raises(TelemetryError, match=message):
        parse_loss_log(io.StringIO(src))


def test_epochs_sorted_and_gaps_recorded():
    src = "\n".join(json.dumps({"epoch": e, "g_loss": 1.0, "d_loss": 0.5}) for e in (5, 1, 2))
    s = parse_loss_log(io.StringIO(src))
    assert s.epochs.tolist() == [1, 2, 5]
    assert s.gaps == ((2, 5),) or list(s.gaps) == [(2, 5)]


def test_csv_log():
    src = "epoch,g_loss,d_loss\n0,0.5,0.25\n1,0.6,0.2\n"
    s = parse_loss_log(io.StringIO(src), "csv")
    assert s.epochs.tolist() == [0, 1] and s.d.tolist() == [0.25, 0.2]
    with pytest.raises(TelemetryError, match="header"):
        parse_loss_log(io.StringIO("a,b,c\n0,1,2\n"), "csv")
    with pytest.raises(TelemetryError, match=r"line 4.*g_loss.*not finite"):
        parse_loss_log(io.StringIO(src + "2,nan,0.1\n"), "csv")


def test_iter_records_is_lazy():
    def lines():
        yield b'{"epoch":0,"g_loss":1,"d_loss":1}\n'
        raise AssertionError("read past the first record")

    assert next(iter_loss_records(lines())).epoch == 0


@pytest.mark.parametrize("fmt", ["jsonl", "csv"])
def test_round_trip_of_simulated_log(fmt):
    series = simulate_losses(Scenario(ScenarioKind.NON_CONVERGENCE, seed=4))
    buf = io.StringIO()
    emit_loss_log(series, buf, fmt)
    back = parse_loss_log(io.StringIO(buf.getvalue()), fmt)
    assert back.records == series.records


def test_record_validation():
    with pytest.raises(TelemetryError):
        LossRecord(0, float("inf"), 0.0)
    with pytest.raises(TelemetryError):
        LossSeries(())
    with pytest.raises(TelemetryError):
        LossSeries((LossRecord(1, 0, 0), LossRecord(1, 0, 0)))
    assert LossSeries((LossRecord(0, 1, 1),), LossKind.RELATIVISTIC_HINGE).loss_kind is LossKind.RELATIVISTIC_HINGE


def test_slice_window_examples():
    s = LossSeries.from_arrays(np.arange(1000), np.zeros(1000), np.zeros(1000))
    assert slice_window(s, 449, 50).epochs.tolist() == list(range(400, 450))
    assert slice_window(s, 10, 50).epochs.tolist() == list(range(0, 11))
    with pytest.raises(TelemetryError):
        slice_window(s, 2000, 50)


@given(st.lists(st.integers(0, 300), min_size=1, max_size=60, unique=True), st.data())
def test_slice_window_bounds(epochs, data):
    epochs = sorted(epochs)
    s = LossSeries.from_arrays(epochs, np.ones(len(epochs)), np.ones(len(epochs)))
    end = data.draw(st.sampled_from(epochs))
    width = data.draw(st.integers(2, 100))
    got = slice_window(s, end, width).epochs
    assert all(end - width < e <= end for e in got)
    assert got.tolist() == [e for e in epochs if end - width < e <= end]


def test_pgm_full_white(tmp_path):
    paths = [_pgm(tmp_path / f"{i}.pgm", 128, 128, 255) for i in range(2)]
    imgs = load_image_set(paths)
    assert len(imgs) == 2 and imgs.height == imgs.width == 128
    assert np.all(imgs.images == 1.0)


def test_mixed_dimensions_name_both_sizes(tmp_path):
    a = _pgm(tmp_path / "a.pgm", 128, 128, 10)
    b = _pgm(tmp_path / "b.pgm", 64, 64, 10)
    with pytest.raises(TelemetryError) as exc:
        load_image_set([a, b])
    assert "128x128" in str(exc.value) and "64x64" in str(exc.value)


def test_image_errors(tmp_path):
    with pytest.raises(TelemetryError):
        load_image_set([])
    bad = tmp_path / "x.pgm"
    bad.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(TelemetryError):
        read_image(bad)
    short = tmp_path / "s.pgm"
    short.write_bytes(b"P5\n20 20\n255\n" + b"\0" * 10)
    with pytest.raises(TelemetryError):
        read_pgm(short)
    with pytest.raises(TelemetryError):
        ImageSet(np.zeros((1, 8, 8)))
    with pytest.raises(TelemetryError):
        ImageSet(np.full((1, 16, 16), 1.5))


def test_pgm_comments_and_small_maxval(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n16 16\n# more\n15\n" + bytes([15]) * 256)
    assert np.all(read_pgm(p) == 1.0)


def test_simulated_images_survive_write_read(tmp_path):
    imgs = simulate_images(blob_distribution(4, size=64), 100, seed=1)
    paths = write_image_set(tmp_path, imgs)
    back = load_image_set(paths)
    assert np.max(np.abs(back.images - imgs.images)) <= 0.5 / 255 + 1e-12


@given(st.lists(st.integers(0, 255), min_size=256, max_size=256))
def test_normalisation_monotone_and_bounded(tmp_path_factory, raw):
    p = tmp_path_factory.mktemp("pgm") / "r.pgm"
    p.write_bytes(b"P5\n16 16\n255\n" + bytes(raw))
    img = read_pgm(p).ravel()
    assert img.min() >= 0 and img.max() <= 1
    order = np.argsort(raw, kind="stable")
    assert np.all(np.diff(img[order]) >= 0)


def test_png_optional(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    arr = (np.arange(256).reshape(16, 16)).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(tmp_path / "a.png")
    write_pgm(tmp_path / "b.pgm", arr / 255.0)
    imgs = load_image_dir(tmp_path)
    assert np.array_equal(imgs.images[0], imgs.images[1])


def test_snapshot_dirs(tmp_path):
    for name in ("epoch_50", "epoch_100", "notes", "epoch_x"):
        (tmp_path / name).mkdir()
    assert sorted(find_snapshot_dirs(tmp_path)) == [50, 100]
