import pytest

from critheights.config import Config, load_config, parse


def test_defaults():
    cfg = Config()
    assert cfg.tol == 1e-10 and cfg.max_iterations == 10_000
    assert cfg.angle_grid == 64 and cfg.precision == "double"


def test_parse_with_comments():
    raw = parse("tol = 1e-8  # tighter\nworkers=3\n")
    assert raw == {"tol": "1e-8", "workers": "3"}


def test_load_file_and_types(tmp_path, monkeypatch):
    monkeypatch.delenv("CRITHEIGHTS_CACHE", raising=False)
    p = tmp_path / "c.cfg"
    p.write_text("tol = 1e-8\nmax-iterations = 50\ncache_dir = /tmp/x\nprecision = mp\n")
    cfg = load_config(str(p))
    assert cfg.tol == 1e-8 and cfg.max_iterations == 50
    assert cfg.cache_dir == "/tmp/x" and cfg.precision == "mp"


def test_env_config_and_cache(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 7\n")
    monkeypatch.setenv("CRITHEIGHTS_CONFIG", str(p))
    monkeypatch.setenv("CRITHEIGHTS_CACHE", str(tmp_path / "cc"))
    cfg = load_config()
    assert cfg.seed == 7 and cfg.cache_dir == str(tmp_path / "cc")
    assert cfg.check_cache() == str(tmp_path / "cc")


def test_updated_ignores_none():
    cfg = Config().updated(tol=None, workers=2)
    assert cfg.tol == 1e-10 and cfg.workers == 2


@pytest.mark.parametrize("text", ["tol = 0\n", "workers = 0\n", "precision = quad\n", "bogus = 1\n",
                                  "max_iterations = many\n"])
def test_invalid(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    with pytest.raises(ValueError):
        load_config(str(p))
