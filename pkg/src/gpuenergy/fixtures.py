"""Reference data: published cap-response figures and datacenter PUE values.

Points tagged ``"published"`` are stated numerically in the source
measurements.  Everything tagged ``"synthetic"`` only reproduces the shape of
a plotted curve (or fills a cap with no published number) and exists so the
simulator has a complete response curve to work with.
"""

from __future__ import annotations

from dataclasses import dataclass

from .powercap import CapProfile


@dataclass(frozen=True)
class CurveFixture:
    name: str
    device_class: str
    default_cap: float
    nominal_draw: float
    points: dict[float, tuple[float, float]]
    source: dict[float, str]
    base_duration: float = 600.0
    gpus: int = 1

    def profile(self) -> CapProfile:
        return CapProfile.from_table(self.points, self.default_cap, self.device_class)


def _curve(name, device_class, default_cap, nominal_draw, rows, **kw) -> CurveFixture:
    points = {w: (t, e) for w, (t, e, _) in rows.items()}
    source = {w: s for w, (_, _, s) in rows.items()}
    points[default_cap] = (1.0, 1.0)
    source[default_cap] = "definition"
    return CurveFixture(name, device_class, default_cap, nominal_draw, points, source, **kw)


P, S = "published", "synthetic"

INFERENCE_V100 = _curve("bert-inference-v100", "V100", 250.0, 200.0, {
    100.0: (2.14, 0.890, P),
    150.0: (1.227, 0.758, P),
    200.0: (1.082, 0.880, P),
})

BERT_V100 = _curve("bert-mlm-v100", "V100", 250.0, 140.0, {
    100.0: (1.314, 0.880, S),
    150.0: (1.085, 0.877, P),
    200.0: (1.021, 0.945, S),
})

DISTILBERT_V100 = _curve("distilbert-mlm-v100", "V100", 250.0, 140.0, {
    100.0: (1.350, 0.900, S),
    150.0: (1.100, 0.860, S),
    200.0: (1.020, 0.930, S),
})

BIGBIRD_V100 = _curve("bigbird-mlm-v100", "V100", 250.0, 140.0, {
    100.0: (1.280, 0.860, S),
    150.0: (1.070, 0.850, S),
    200.0: (1.010, 0.950, S),
})

MODEL_CURVES = (BERT_V100, DISTILBERT_V100, BIGBIRD_V100)

# Six distributed BERT configurations.  Per-configuration values are synthetic
# but their means equal the published averages: 150 W -> 1.068 time and
# 0.863 energy; 100 W -> 1.314 time.
SCALING_GPUS = (32, 64, 128, 256, 384, 424)
SCALING_EPOCHS = (6, 10, 15, 25, 40, 40)
SCALING_MEAN_150 = (1.068, 0.863)
SCALING_MEAN_100_TIME = 1.314
_T150 = (1.080, 1.062, 1.072, 1.058, 1.070, 1.066)
_E150 = (0.853, 0.871, 0.859, 0.875, 0.861, 0.859)
_T100 = (1.300, 1.330, 1.290, 1.340, 1.310, 1.314)
_E100 = (0.900, 0.880, 0.910, 0.870, 0.890, 0.890)
_T200 = (1.010, 1.012, 1.008, 1.015, 1.006, 1.010)
_E200 = (0.930, 0.935, 0.925, 0.940, 0.928, 0.932)

SCALING_CURVES = tuple(
    _curve(f"bert-scaling-{g}gpu", "V100", 250.0, 140.0, {
        100.0: (_T100[i], _E100[i], S),
        150.0: (_T150[i], _E150[i], S),
        200.0: (_T200[i], _E200[i], S),
    }, base_duration=900.0, gpus=g)
    for i, g in enumerate(SCALING_GPUS)
)

# Hardware platforms: defaults are published; curve shapes are synthetic
# (A100 saves more than V100 at 150/200 W, T4 is best at its default, K80 is
# ambiguous).
A100 = _curve("bert-mlm-a100", "A100", 250.0, 190.0, {
    100.0: (1.600, 0.800, S),
    150.0: (1.120, 0.760, S),
    200.0: (1.030, 0.840, S),
})
K80 = _curve("bert-mlm-k80", "K80", 150.0, 130.0, {
    100.0: (1.300, 0.980, S),
    125.0: (1.120, 1.010, S),
})
T4 = _curve("bert-mlm-t4", "T4", 70.0, 65.0, {
    60.0: (1.220, 1.050, S),
    65.0: (1.090, 1.020, S),
})

HARDWARE_CURVES = (A100, K80, T4)

CURVES: dict[str, CurveFixture] = {
    c.name: c
    for c in (INFERENCE_V100, *MODEL_CURVES, *SCALING_CURVES, *HARDWARE_CURVES)
}

# Datacenter reference values.
PUE_GLOBAL_AVERAGE = 1.59
PUE_CLOUD_2021 = 1.10
PUE_LAB_RECORD = 1.036
PUE_JANUARY_2020 = 1.05
PUE_JULY_2020 = 1.49
PUE_JULY27_MIN = 1.48
PUE_JULY27_MAX = 1.63
PUE_JULY27_NIGHT = 1.46
JULY27_REPORTED_VARIATION = 10.4

MONTHLY_VARIATION_2020 = {
    "January": 1.30,
    "February": 0.69,
    "March": 0.77,
    "April": 2.15,
    "May": 11.51,
    "June": 21.70,
    "July": 7.76,
    "August": 17.37,
    "September": 12.41,
    "October": 8.07,
    "November": 2.88,
    "December": 1.07,
}
ANNUAL_VARIATION_2020 = 7.30

REPORTED_TOTAL_KWH = 782
