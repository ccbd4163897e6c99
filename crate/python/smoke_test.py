"""Smoke test for the disimo Python extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/disimo-*.whl
"""

import os
import tempfile

import disimo


def check_hrv():
    beats = [0.0]
    for i in range(40):
        beats.append(beats[-1] + (1.0 if i % 2 == 0 else 60.0 / 70.0))
    rng = disimo.hrv_range(beats, beats[-1])
    assert abs(rng - 10.0) < 1e-9, rng
    assert disimo.hrv_range([0.0, 1.0], 1.0) is None
    assert [disimo.classify(r) for r in (1.5, 2.0, 5.0, 10.0)] == ["low", "mid", "mid", "high"]
    assert disimo.instantaneous_hr(1.0, 1.8) == 75.0


def check_heartsim():
    model = disimo.HeartModel(hr_base=70, breath_freq=0.125, seed=3)
    assert model.coupling == disimo.coupling_for_pace(0.125)
    beats = model.beats(120.0)
    assert 130 < len(beats) < 150, len(beats)
    assert beats == disimo.HeartModel.from_descriptor("synth:hr=70,breath=0.125,seed=3").beats(120.0)
    sim = disimo.HeartSim(model)
    first = sim.advance_to(60.0)
    sim.retune(0.4)
    assert len(first) + len(sim.advance_to(120.0)) > 130


def check_audio():
    buf = disimo.synthesize_guide(cycles=1, sample_rate=8000, seed=1)
    assert len(buf) == 8 * 8000
    assert all(s == 0.0 for s in buf[int(20 / 3 * 8000) + 1:])
    assert disimo.envelope(10 / 3) == 1.0
    assert disimo.pink_noise(1000, seed=5) == disimo.pink_noise(1000, seed=5)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "guide.wav")
        n = disimo.write_guide(path, cycles=1, sample_rate=8000)
        assert n == 64000 and os.path.getsize(path) == 44 + 2 * n


def check_cluster():
    assert disimo.mix_colors([((255, 0, 0), True, False), ((0, 0, 255), True, True)]) == (127, 0, 127)
    assert disimo.brightness([((1, 1, 1), True, True)] * 2 + [((1, 1, 1), True, False)]) == 2 / 3
    s = disimo.Session()
    s.join("a", (255, 0, 0))
    s.join("b", (0, 0, 255))
    snap, invites = s.update("a", True, True)
    assert invites == ["b"]
    assert snap == {"color": [255, 0, 0], "brightness": 1.0, "active_count": 1, "member_count": 2}
    assert s.members == ["a", "b"]


def check_device():
    dev = disimo.Device(color=(0, 128, 255), low_trigger=30.0)
    model = disimo.HeartModel(hr_base=72, breath_freq=0.4, seed=4)
    actions = []
    beats = iter(model.beats(60.0))
    next_beat = next(beats)
    for k in range(61):
        while next_beat is not None and next_beat < k:
            actions += dev.beat(next_beat)
            next_beat = next(beats, None)
        actions += dev.tick(float(k))
    starts = [a for a in actions if a.get("action") == "start_audio"]
    assert starts and 30.0 <= starts[0]["t"] <= 34.0, starts
    assert dev.mode == "reminding"
    out = dev.grasp(61.0)
    assert [a["action"] for a in out][:2] == ["fade_audio", "start_audio"]
    assert dev.mode == "active"


if __name__ == "__main__":
    for check in (check_hrv, check_heartsim, check_audio, check_cluster, check_device):
        check()
        print(f"ok {check.__name__}")
    print("smoke test passed")
