import pytest

from nativeres.config import Config, load_config
from nativeres.errors import ConfigError
from nativeres.taxonomy import RatioBin


def test_absent_file_gives_defaults(tmp_path):
    assert load_config(tmp_path / "none.ini", environ={}) == Config()
    assert load_config(None, environ={}) == Config()


def test_file_values(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(
        "[budget]\nmax_tokens = 4096\nmax_res = 1792\n"
        "[packer]\ncapacity = 5120\npolicy = best_fit\n"
        "[report]\nsigma = sample\nrow_order = BH, AH, NM, AW, BW\n"
        "[scoring]\ntau = 0.4\n"
    )
    cfg = load_config(p, environ={})
    assert cfg.budget.max_tokens == 4096 and cfg.budget.max_res == 1792
    assert cfg.packer.capacity == 5120 and cfg.packer.policy == "best_fit"
    assert cfg.report.row_order[0] is RatioBin.BH and cfg.report.sigma == "sample"
    assert cfg.scoring.tau == 0.4


def test_env_overrides_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[encoder]\nseed = 1\n")
    cfg = load_config(p, environ={"NATIVERES_ENCODER_SEED": "9", "NATIVERES_BUDGET_MAX_TOKENS": "64", "HOME": "/x"})
    assert cfg.encoder.seed == 9 and cfg.budget.max_tokens == 64


@pytest.mark.parametrize(
    "text",
    [
        "[budget]\nmax_tokenz = 5\n",
        "[colours]\nred = 1\n",
        "[budget]\nmax_tokens = many\n",
        "[packer]\npolicy = worst_fit\n",
        "[report]\nrow_order = BW, AW\n",
        "not an ini file",
    ],
)
def test_bad_files(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p, environ={})


def test_bad_env():
    with pytest.raises(ConfigError):
        load_config(None, environ={"NATIVERES_NOPE_X": "1"})
    with pytest.raises(ConfigError):
        load_config(None, environ={"NATIVERES_BUDGET_COLOUR": "1"})
