import json
import re
import shutil

import pytest

from softmask import cli
from softmask.shadowmodel import PRESETS

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: print a PASS/FAIL line, then assert."""
    log = request.config.stash[_ACCEPTANCE]

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}  [{detail}]"
        log.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash[_ACCEPTANCE]
    if log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log, key=lambda s: int(re.search(r"criterion (\d+)", s).group(1))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bundles(tmp_path_factory):
    """Synthetic bundles for three presets, rendered through the CLI."""
    root = tmp_path_factory.mktemp("bundles")
    out = {}
    for name in ("disc_soft", "rect_checker", "triangle_checker"):
        scene = root / f"{name}.json"
        scene.write_text(json.dumps(PRESETS[name].to_dict()))
        assert cli.run(["synth", "--scene", str(scene), "--out", str(root / name),
                        "--noise", "0.005", "--seed", "1"]) == 0
        out[name] = root / name
    return out


@pytest.fixture(scope="session")
def dataset(bundles, tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    for sub in ("shadow", "shadow_free", "mask"):
        (root / sub).mkdir()
    for name, b in bundles.items():
        shutil.copy(b / "y.png", root / "shadow" / f"{name}.png")
        shutil.copy(b / "x.png", root / "shadow_free" / f"{name}.png")
        shutil.copy(b / "s_true.png", root / "mask" / f"{name}.png")
    return root
