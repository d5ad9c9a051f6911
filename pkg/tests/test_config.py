import numpy as np
import pytest

from ganirl.config import (
    ConfigFileError,
    build_ebm_config,
    build_train_config,
    git_blob_hash,
    load_config,
    parse_config,
)


def test_defaults_reproduce_standard_world():
    from ganirl.training import default_config

    cfg = build_train_config(parse_config("[train]\nseed = 7\n"))
    ref = default_config(seed=7)
    assert (cfg.width, cfg.height, cfg.start, cfg.horizon, cfg.seed) == (3, 3, 0, 5, 7)
    np.testing.assert_array_equal(cfg.true_cost.params, ref.true_cost.params)
    np.testing.assert_array_equal(cfg.true_cost.features, ref.true_cost.features)


def test_seed_override_and_echo_round_trip():
    run = parse_config("[train]\nseed = 3\nstep_size = 0.25  # inline comment\n", seed=9)
    assert run.seed == 9
    again = parse_config(run.echo())
    assert again.values == run.values
    assert again.content_hash() == run.content_hash()


def test_git_blob_hash_matches_git():
    # `printf 'hello\n' | git hash-object --stdin`
    assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_onehot_random_theta():
    run = parse_config("[world]\nwidth = 2\nheight = 2\nhorizon = 3\n[cost]\nfeatures = onehot\ntheta = random\n")
    cfg = build_train_config(run)
    assert cfg.true_cost.kind == "tabular" and cfg.true_cost.n_params == 16


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("[train]\nstep_size = fast\n", 2, "float"),
        ("[train]\n\nbogus = 1\n", 3, "unknown key"),
        ("seed = 1\n", 1, "outside"),
        ("[world]\nwidth = 3\nheight = 0\n", 3, "height"),
        ("[world]\nstart = 99\n", 2, "start"),
        ("[cost]\ntheta = 1, 2\n", 2, "theta"),
        ("[train]\nexpectations = sometimes\n", 2, "expectations"),
        ("[train]\nseed = 1\nseed = 2\n", 3, "seed"),
        ("[nonsense]\n", 1, "unknown section"),
        ("[ebm]\ngenerator = mixture\n", 2, "generator"),
        ("[ebm]\ndata = spiral\n", 2, "spiral"),
    ],
)
def test_errors_are_line_numbered(text, line, fragment):
    with pytest.raises(ConfigFileError) as err:
        parse_config(text, "bad.cfg")
    assert err.value.lineno == line
    assert f"bad.cfg:{line}:" in str(err.value) and fragment in str(err.value)


def test_mixed_families_rejected():
    with pytest.raises(ConfigFileError, match="cannot be combined"):
        parse_config("[train]\nseed = 1\n[ebm]\nseed = 1\n")


def test_ebm_config_with_table(tmp_path):
    table = tmp_path / "p.txt"
    table.write_text("\n".join(["0.5", "0.25", "0.25", "0"]) + "\n")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("[ebm]\nwidth = 2\nheight = 2\ndata_file = p.txt\n")
    cfg = build_ebm_config(load_config(cfg_path))
    np.testing.assert_array_equal(cfg.data_probs(), [0.5, 0.25, 0.25, 0.0])


def test_missing_file():
    with pytest.raises(ConfigFileError, match="cannot read"):
        load_config("/nonexistent/run.cfg")
