from __future__ import annotations

import numpy as np
import pytest

from rlncbp.harness import write_pgm


def synthetic_frames(n_frames: int = 5, shape=(36, 44), seed: int = 7) -> np.ndarray:
    """Slowly panning smooth scene with sensor noise, ``uint8`` (n_frames, rows, cols)."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    out = []
    for t in range(n_frames):
        cx, cy = 0.35 * w + 1.5 * t, 0.5 * h + 0.5 * t
        scene = (60.0 + 90.0 * xx / w + 40.0 * np.sin(yy / 6.0)
                 + 70.0 * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / 60.0))
        img = scene + rng.normal(0.0, 3.0, size=shape)
        out.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return np.stack(out)


@pytest.fixture
def frames_dir(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    for k, img in enumerate(synthetic_frames()):
        write_pgm(d / f"frame{k:02d}.pgm", img)
    return d


# acceptance criteria report: one line per criterion, repeated in the summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def accept():
    def record(name: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" | {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
