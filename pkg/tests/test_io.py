import numpy as np
import pytest

from hierfrf.io import (
    DataFormatError,
    ensure_dir,
    read_frf_csv,
    read_json,
    read_time_series_csv,
    read_trace_csv,
    training_mask,
    write_frf_csv,
    write_json,
    write_time_series_csv,
)
from hierfrf.sampler import SamplerConfig, adapt_and_sample
from hierfrf.signal import FrfObservations, TimeSeries
from hierfrf.targets import GaussianTarget


def test_frf_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    f = np.sort(rng.uniform(1, 200, 50))
    re, im = rng.normal(size=50) * 1e-3, rng.normal(size=50) * 1e7
    write_frf_csv(tmp_path / "a.csv", f, re, im, temperature=-7.5)
    obs = read_frf_csv(tmp_path / "a.csv", require_temperature=True)
    np.testing.assert_array_equal(obs.frequency, 2 * np.pi * f)
    np.testing.assert_array_equal(obs.value.real, re)
    np.testing.assert_array_equal(obs.value.imag, im)
    assert obs.temperature == -7.5


def test_real_only_frf(tmp_path):
    write_frf_csv(tmp_path / "b.csv", [1.0, 2.0], [0.5, -0.5])
    assert (tmp_path / "b.csv").read_text() == "freq_hz,real\n1,0.5\n2,-0.5\n"
    obs = read_frf_csv(tmp_path / "b.csv")
    assert not np.iscomplexobj(obs.value) and obs.temperature is None
    with pytest.raises(DataFormatError, match="temperature"):
        read_frf_csv(tmp_path / "b.csv", require_temperature=True)


@pytest.mark.parametrize("text", [
    "",
    "freq,real\n1,2\n",
    "freq_hz,real\n1,abc\n",
    "freq_hz,real\n1,2,3\n",
    "freq_hz,real\n",
    "freq_hz,real,temperature_c\n1,2,5\n2,3,6\n",
    "freq_hz,real\n-1,2\n",
])
def test_malformed_frf_files(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataFormatError):
        read_frf_csv(p)


def test_missing_file():
    with pytest.raises(DataFormatError):
        read_frf_csv("/nonexistent/file.csv")
    with pytest.raises(DataFormatError):
        read_json("/nonexistent/file.json")


def test_time_series_round_trip(tmp_path):
    ts = TimeSeries(np.random.default_rng(1).normal(size=300), 256.0)
    write_time_series_csv(tmp_path / "x.csv", ts)
    back = read_time_series_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.samples, ts.samples)
    assert back.sample_rate == pytest.approx(256.0, rel=1e-9)
    (tmp_path / "y.csv").write_text("time_s,value\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(DataFormatError):
        read_time_series_csv(tmp_path / "y.csv")


def test_json_round_trip(tmp_path):
    write_json(tmp_path / "a.json", {"b": [1, 2.5], "a": None})
    assert read_json(tmp_path / "a.json") == {"a": None, "b": [1, 2.5]}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DataFormatError):
        read_json(tmp_path / "bad.json")


def test_trace_csv_round_trip(tmp_path):
    tr = adapt_and_sample(GaussianTarget.correlated_2d(0.2),
                          SamplerConfig(chains=2, warmup_draws=50, sampling_draws=30, seed=0))
    tr.write_csv(tmp_path / "t.csv")
    back = read_trace_csv(tmp_path / "t.csv")
    assert back.names == tr.names
    np.testing.assert_array_equal(back.constrained, tr.constrained)
    np.testing.assert_array_equal(back.divergent, tr.divergent)
    (tmp_path / "u.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError):
        read_trace_csv(tmp_path / "u.csv")


def test_training_mask_excludes_shared_lines():
    test = FrfObservations(np.array([1.0, 2.0, 3.0, 4.0]), np.zeros(4))
    train = FrfObservations(np.array([2.0, 4.0]), np.zeros(2))
    np.testing.assert_array_equal(training_mask(test, train), [True, False, True, False])
    assert training_mask(test, None).all()


def test_ensure_dir(tmp_path):
    assert ensure_dir(tmp_path / "a" / "b").is_dir()
    (tmp_path / "file").write_text("")
    with pytest.raises(DataFormatError):
        ensure_dir(tmp_path / "file" / "sub")
