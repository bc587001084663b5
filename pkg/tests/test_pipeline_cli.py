import csv
import math

import numpy as np
import pytest

from pcartifact.cli import main
from pcartifact.cloud import PointCloud, read_ply, write_ply
from pcartifact.metrics import read_metrics_csv
from pcartifact.net import Checkpoint, NetConfig, UNet
from pcartifact.noise import NoiseConfig, inject_noise
from pcartifact.pipeline import denoise, load_config, parse_config_text, sweep_c, training_pairs
from pcartifact.sampling import SamplerConfig, patch_count
from pcartifact.synthetic import multi_plane_cloud

SMALL = ["--depth", "1", "--base-channels", "4", "--steps", "3", "--k", "200", "--C", "2", "--cube-side", "12"]


@pytest.fixture(scope="module")
def clouds(tmp_path_factory):
    d = tmp_path_factory.mktemp("clouds")
    clean = multi_plane_cloud(3000, box=96, seed=5)
    write_ply(clean, d / "clean.ply")
    assert main(["simulate", str(d / "clean.ply"), str(d / "noisy.ply"), "--qstep", "4"]) == 0
    return d


def _identity_net(cfg=NetConfig(depth=1, base_channels=4)):
    net = UNet(cfg)
    net.params["head.weight"][:] = 0
    net.params["head.bias"][:] = 0
    return net


def test_identity_denoise_round_trip():
    cloud = multi_plane_cloud(2000, box=80, seed=1)
    res = denoise(cloud, _identity_net(), SamplerConfig(k=150, C=2))
    assert len(res.cloud) == len(cloud)
    assert res.covered > 0
    np.testing.assert_array_equal(res.cloud.points, cloud.points)
    assert res.n_patches == patch_count(2000, 2, 150)


def test_uncovered_points_pass_through():
    cloud = PointCloud(np.r_[np.zeros((20, 3)) + np.arange(20)[:, None] % 3, [[500.0, 500, 500]]])
    net = UNet(NetConfig(depth=1, base_channels=4, head_init_scale=1.0, seed=2))
    res = denoise(cloud, net, SamplerConfig(k=20, C=1, cube_side=8, min_points=2))
    assert res.covered == 20
    np.testing.assert_array_equal(res.cloud.points[20], [500, 500, 500])


def test_workers_do_not_change_output():
    cloud = multi_plane_cloud(2000, box=80, seed=2)
    net = UNet(NetConfig(depth=1, base_channels=4, head_init_scale=1.0, head_mode="soft"))
    a = denoise(cloud, net, SamplerConfig(k=150, C=2), workers=1)
    b = denoise(cloud, net, SamplerConfig(k=150, C=2), workers=4)
    assert a.cloud.points.tobytes() == b.cloud.points.tobytes()


def test_training_pairs_multiple_passes():
    clean = multi_plane_cloud(1500, box=64, seed=3)
    noisy = inject_noise(clean, NoiseConfig())
    one = training_pairs(noisy, clean, SamplerConfig(k=150, C=2, cube_side=10))
    two = training_pairs(noisy, clean, SamplerConfig(k=150, C=2, cube_side=10), seeds=2)
    assert len(two) > len(one)


def test_sweep_c_rows():
    clean = multi_plane_cloud(1500, box=64, seed=3)
    noisy = inject_noise(clean, NoiseConfig())
    rows = sweep_c(noisy, clean, _identity_net(), SamplerConfig(k=150), [1, 2, 4], repeats=2)
    assert [r.C for r in rows] == [1, 2, 4]
    assert [r.n_patches for r in rows] == [patch_count(len(noisy), c, 150) for c in (1, 2, 4)]
    assert len({r.psnr for r in rows}) == 1  # identity network: PSNR independent of C


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nk = 500\nC = 3\ncube_side = auto\nhead_mode = soft\nnormalization = instance\nlr = 0.01\nworkers = 2\n")
    cfg = load_config(path, {"C": 5.0, "k": None})
    assert cfg.sampler.k == 500 and cfg.sampler.C == 5.0 and cfg.sampler.cube_side is None
    assert cfg.net.head_mode == "soft" and cfg.net.lr == 0.01 and cfg.workers == 2
    assert cfg.net.normalization == "instance"
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("qstep = 4\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config_text("k = many\n")


def test_cli_full_flow(clouds, tmp_path, capsys):
    noisy, clean = str(clouds / "noisy.ply"), str(clouds / "clean.ply")
    manifest = (clouds / "noisy.ply.noise.txt").read_text()
    assert "qstep 4.0" in manifest and "input_points 3000" in manifest

    assert main(["sample", noisy, clean, str(tmp_path / "set"), "--k", "200", "--C", "2", "--cube-side", "12"]) == 0
    assert (tmp_path / "set" / "manifest.txt").exists()

    ck = tmp_path / "m.ckpt"
    assert main(["train", str(tmp_path / "set"), "--out", str(ck), *SMALL]) == 0
    with open(str(ck) + ".loss.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 3

    out = tmp_path / "clean_out.ply"
    assert main(["denoise", noisy, str(ck), str(out), "--k", "200", "--C", "2"]) == 0
    assert len(read_ply(out)) == len(read_ply(noisy))
    assert "patches N=" in capsys.readouterr().out

    mcsv = tmp_path / "metrics.csv"
    assert main(["eval", noisy, clean, "--rate", "0.5", "--name", "noisy", "--csv", str(mcsv)]) == 0
    assert main(["eval", str(out), clean, "--rate", "0.5", "--csv", str(mcsv)]) == 0
    reports = read_metrics_csv(mcsv)
    assert [r.name for r in reports] == ["noisy", "clean_out.ply"]
    assert all(math.isfinite(r.psnr_d1) for r in reports)

    sweep = tmp_path / "sweep.csv"
    assert main(["sweep-c", noisy, clean, str(ck), "--values", "1", "2", "--k", "200", "--out", str(sweep)]) == 0
    assert sweep.read_text().splitlines()[0] == "C,psnr,seconds,n_patches"


def test_cli_bdrate(tmp_path, capsys):
    def write(path, scale):
        lines = ["name,rate_bpp,mse_ab,mse_ba,psnr_d1,psnr_hausdorff,chamfer"]
        for r, p in [(0.1, 60.0), (0.2, 63.0), (0.4, 66.0), (0.8, 69.0)]:
            lines.append(f"r{r},{r * scale},1,1,{p},{p},1")
        path.write_text("\n".join(lines) + "\n")

    write(tmp_path / "a.csv", 1.0)
    write(tmp_path / "t.csv", 0.5)
    assert main(["bdrate", str(tmp_path / "a.csv"), str(tmp_path / "t.csv")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(-50.0, abs=1e-3)


def test_cli_determinism(clouds, tmp_path):
    noisy, clean = str(clouds / "noisy.ply"), str(clouds / "clean.ply")
    main(["sample", noisy, clean, str(tmp_path / "set"), "--k", "200", "--C", "2", "--cube-side", "12"])
    for name in ("a", "b"):
        assert main(["train", str(tmp_path / "set"), "--out", str(tmp_path / f"{name}.ckpt"), *SMALL]) == 0
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    for name in ("a", "b"):
        assert main(["denoise", noisy, str(tmp_path / "a.ckpt"), str(tmp_path / f"{name}.ply")]) == 0
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_cli_errors(clouds, tmp_path, capsys):
    assert main(["denoise", str(tmp_path / "missing.ply"), "x.ckpt", str(tmp_path / "o.ply")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and len(err.strip().splitlines()) == 1
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nope")
    assert main(["denoise", str(clouds / "noisy.ply"), str(bad), str(tmp_path / "o.ply")]) == 1
    assert not (tmp_path / "o.ply").exists()
    cfgf = tmp_path / "arch.cfg"
    cfgf.write_text("depth = 2\n")
    ck = tmp_path / "m.ckpt"
    Checkpoint(NetConfig(depth=1, base_channels=4), UNet(NetConfig(depth=1, base_channels=4)).params).save(ck)
    assert main(["denoise", str(clouds / "noisy.ply"), str(ck), str(tmp_path / "o.ply"), "--config", str(cfgf)]) == 1
    assert "architecture" in capsys.readouterr().err
