import pytest

from racksim.config import ENV_CONFIG, ConfigError, RunConfig, load_config, parse_config_text
from racksim.units import GB, KB, MB, parse_size


def test_empty_file_gives_rack_defaults():
    cfg = parse_config_text("")
    assert (cfg.nodes, cfg.pools) == (64, 6)
    assert cfg.local_memory == 256 * MB
    assert cfg.pool_capacity == 32 * GB
    assert cfg.chunk_size == 4 * MB
    assert cfg.epoch_cycles == 1_500_000
    f = cfg.fabric_config()
    assert f.link_rate_bps == 100_000_000_000
    assert (f.nic_proc, f.switch_delay, f.packet_prep, f.propagation) == (10_000, 20_000, 25_000, 2_500)
    assert f.switch_buffer_bytes == 16_500_000
    assert cfg.pool_dram_config().channels == 2
    levels = cfg.cache_config().levels
    assert [(lv.size, lv.ways, lv.latency) for lv in levels] == [
        (32 * KB, 8, 4), (256 * KB, 4, 12), (16 * MB, 16, 41)]


def test_single_override():
    cfg = parse_config_text("pools = 4\n")
    assert cfg.pools == 4 and cfg.nodes == 64


@pytest.mark.parametrize("text, fragment", [
    ("pools=0", "pools"),
    ("colour = red", "line 1: unknown key 'colour'"),
    ("\n\nnodes = many", "line 3: nodes"),
    ("pool_policy = greedy", "pool_policy"),
    ("chunk_size = 1000", "chunk_size"),
    ("preset.lbm.shape = 3", "unknown key"),
    ("just words", "line 1"),
    ("nodes = 2", "workloads"),
])
def test_errors_name_key_or_line(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text)


def test_sizes_and_bits():
    assert parse_size("256MB") == 256 * MB
    assert parse_size("132Mb") == 132 * MB // 8
    assert parse_size("4096") == 4096
    assert parse_config_text("local_memory = 16MB").local_memory == 16 * MB


def test_desk_profile():
    cfg = parse_config_text("profile = desk")
    assert (cfg.nodes, cfg.pools, cfg.scale) == (8, 4, 1e-3)
    assert cfg.node_labels() == ["lbm", "lbm", "fotonik3d", "fotonik3d", "fft", "fft", "fmm", "fmm"]
    assert parse_config_text("profile = desk\nnodes = 12").nodes == 12


def test_rack_labels_sixteen_per_workload():
    labels = parse_config_text("").node_labels()
    assert [labels.count(w) for w in ("lbm", "fotonik3d", "fft", "fmm")] == [16] * 4


def test_preset_override():
    cfg = parse_config_text("preset.lbm.burstiness = 0.5\npreset.tiny.footprint_bytes = 1MB\n"
                            "preset.tiny.total_accesses = 10\nworkloads = tiny\nnodes = 1")
    assert cfg.presets["lbm"].burstiness == 0.5
    assert cfg.presets["tiny"].footprint_bytes == MB
    with pytest.raises(ConfigError, match="preset.lbm"):
        parse_config_text("preset.lbm.burstiness = 2")


def test_echo_round_trip():
    cfg = parse_config_text("profile = desk\npools = 3\npreset.fft.burstiness = 0.4\nseed = 9")
    again = parse_config_text(cfg.to_text())
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_env_and_file(tmp_path, monkeypatch):
    p = tmp_path / "rack.cfg"
    p.write_text("# comment\npools = 5   # trailing\n")
    assert load_config(str(p)).pools == 5
    monkeypatch.setenv(ENV_CONFIG, str(p))
    assert load_config(None, {"seed": 3}).pools == 5
    monkeypatch.delenv(ENV_CONFIG)
    assert load_config(None).pools == 6
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.cfg"))


def test_replace_revalidates():
    cfg = RunConfig()
    with pytest.raises(ConfigError):
        cfg.replace(pools=0)
