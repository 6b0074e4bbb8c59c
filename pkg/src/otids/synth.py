"""Synthetic captures shaped like the two reference datasets.

The real captures are not redistributable, so these generators produce
desk-scale stand-ins with the same schemas, the same class balance, and
label rules of the same flavour: attacks occupy contiguous time windows
and each attack category perturbs the features its real counterpart
would touch.  Normal traffic follows simple control-loop physics so that
the attack rules have honest context (a flipped actuator is only
detectable because the normal actuator follows the process).

gen_pipeline returns a 5000-row capture against the ds1-modbus schema
with 1095 attack rows (21.9%) across all seven categories.  gen_batch
returns a 4910-row capture against the ds2-opcua schema with 702 attack
rows (14.3%) in two windows: a dead-capture window where every reported
value collapses to zero, and a manipulation window that keeps values
plausible and is therefore deliberately hard to separate.
"""

from __future__ import annotations

import numpy as np

from .data_model import Dataset, builtin_schema
from .errors import InvalidConfig

# Attack windows for the pipeline capture: (start, end, category, specific).
# Categories: 1 NMRI, 2 CMRI, 3 MSCI, 4 MPCI, 5 MFCI, 6 DoS, 7 Recon.
PIPELINE_ROWS = 5000
PIPELINE_WINDOWS = (
    (300, 380, 1, 1),
    (700, 820, 2, 2),
    (1100, 1170, 3, 3),
    (1500, 1600, 4, 4),
    (1900, 1950, 5, 5),
    (2200, 2275, 6, 6),
    (2450, 2505, 7, 7),
    (2600, 2680, 1, 8),
    (3300, 3420, 2, 9),
    (3800, 3870, 3, 10),
    (4200, 4300, 4, 11),
    (4550, 4595, 5, 12),
    (4700, 4775, 6, 13),
    (4850, 4905, 7, 14),
)
# Operator-driven manual blocks; normal traffic that violates the
# automatic control law, so models must learn the mode interaction.
PIPELINE_MANUAL = ((2000, 2030), (4000, 4030))

_EPOCH = 400           # rows per parameter epoch
_AR = 0.8              # pressure autocorrelation
_P_NOISE = 0.35        # pressure innovation std

BATCH_ROWS = 4910
BATCH_WINDOWS = ((1500, 1802, 1), (3000, 3400, 2))
_CYCLE = 80            # pump duty cycle length (40 on / 40 off)


def gen_pipeline(seed: int = 0) -> Dataset:
    """Synthetic gas-pipeline capture (ds1-modbus schema), 5000 rows."""
    schema = builtin_schema("ds1-modbus")
    rng = np.random.default_rng(seed)
    n = PIPELINE_ROWS
    t = np.arange(n)

    # Per-epoch controller parameters, constant within each epoch.
    n_epochs = n // _EPOCH + 1
    ep = t // _EPOCH
    sp_e = 10.0 + rng.uniform(-0.02, 0.02, n_epochs)
    gain_e = 5.0 + rng.uniform(-0.2, 0.2, n_epochs)
    reset_e = 0.5 + rng.uniform(-0.05, 0.05, n_epochs)
    db_e = 1.0 + rng.uniform(-0.1, 0.1, n_epochs)
    cycle_e = 1.2 + rng.uniform(-0.05, 0.05, n_epochs)
    rate_e = 0.8 + rng.uniform(-0.05, 0.05, n_epochs)
    sp, gain, reset = sp_e[ep], gain_e[ep], reset_e[ep]
    db, cycle, rate = db_e[ep], cycle_e[ep], rate_e[ep]

    # True process pressure: AR(1) around the current setpoint.
    innov = rng.normal(0.0, _P_NOISE, n)
    p_true = np.empty(n)
    p_true[0] = sp[0] + innov[0]
    for i in range(1, n):
        p_true[i] = sp[i] + _AR * (p_true[i - 1] - sp[i]) + innov[i]

    # Polling pattern: mostly reads, a parameter write every 5th packet,
    # an occasional diagnostic.
    fc = np.full(n, 3.0)
    fc[t % 5 == 4] = 16.0
    fc[t % 37 == 20] = 6.0
    length = np.select([fc == 3.0, fc == 16.0, fc == 6.0], [12.0, 66.0, 14.0])

    # Bang-bang control on the reported pressure; relief solenoid opens
    # above setpoint + deadband.
    pump = (p_true < sp).astype(float)
    sol = (p_true > sp + db).astype(float)
    mode = np.full(n, 2.0)
    scheme = np.zeros(n)
    for a, b in PIPELINE_MANUAL:
        mode[a:b] = 1.0
        pump[a:b] = 1.0
    crc = (rng.random(n) < 0.02).astype(float)
    cmdresp = (t % 2).astype(float)
    address = np.full(n, 4.0)
    cycle = cycle + rng.normal(0.0, 0.005, n)
    p_meas = p_true.copy()

    binary = np.zeros(n, dtype=np.int64)
    category = np.zeros(n, dtype=np.int64)
    specific = np.zeros(n, dtype=np.int64)

    for a, b, cat, spec_id in PIPELINE_WINDOWS:
        k = b - a
        w = slice(a, b)
        binary[w], category[w], specific[w] = 1, cat, spec_id
        if cat == 1:
            # Naive response injection: junk readings, kept clear of the
            # plausible band so they are obviously wrong.
            u = rng.uniform(0.0, 16.0, k)
            p_meas[w] = np.where(u < sp[w] - 2.0, u, u + 4.0)
        elif cat == 2:
            # Complex response injection: plausible stuck reading just
            # above the relief threshold while the replayed solenoid
            # state stays closed.
            p_meas[w] = sp[w] + db[w] + 0.35 + rng.normal(0.0, 0.05, k)
            sol[w] = 0.0
            pump[w] = 0.0
        elif cat == 3:
            # State command injection: both actuators driven against the
            # control law; a short tail forces a shutdown mode.
            pump[w] = 1.0 - pump[w]
            sol[w] = 1.0 - sol[w]
            if spec_id == 10:
                mode[b - 20:b] = 0.0
        elif cat == 4:
            # Parameter command injection: writes carrying out-of-policy
            # controller constants.
            fc[w], length[w] = 16.0, 66.0
            if spec_id == 4:
                gain[w] = gain[w] * rng.uniform(1.8, 2.6, k)
            else:
                sp_w = rng.uniform(10.8, 11.5, k)
                sp = sp.copy()
                sp[w] = sp_w
        elif cat == 5:
            # Function-code injection: codes outside the polling set.
            fc[w] = 8.0 if spec_id == 5 else 43.0
            length[w] = 16.0 if spec_id == 5 else 20.0
        elif cat == 6:
            # Flood: oversized frames at a pathological polling rate,
            # corrupted checksums, no real readings coming back.
            cycle[w] = 0.05 + rng.normal(0.0, 0.005, k)
            length[w] = 300.0
            crc[w] = rng.uniform(3.0, 8.0, k)
            p_meas[w] = 0.0
        elif cat == 7:
            # Scan: low-function-code probes with tiny frames.
            fc[w] = np.where(np.arange(k) % 2 == 0, 1.0, 2.0)
            length[w] = 10.0

    # Setpoint column reports the commanded value (epoch constant in
    # normal traffic, attacker-supplied during parameter injection).
    setpoint = sp

    times = np.cumsum(rng.uniform(0.95, 1.05, n))
    values = np.column_stack([
        address, fc, length, setpoint, gain, reset, db, cycle, rate,
        mode, scheme, pump, sol, p_meas, crc, cmdresp, times,
    ])
    return Dataset(schema, values, binary, category, specific)


def gen_batch(seed: int = 0) -> Dataset:
    """Synthetic batch-process capture (ds2-opcua schema), 4910 rows."""
    schema = builtin_schema("ds2-opcua")
    rng = np.random.default_rng(seed)
    n = BATCH_ROWS
    t = np.arange(n)

    phase = t % _CYCLE
    on = phase < 40

    temp_base = 21.5 + 1.0 * np.sin(2.0 * np.pi * t / 1500.0)
    temp = temp_base + rng.normal(0.0, 0.3, n)

    flow = np.where(on, rng.normal(4.0, 0.45, n), rng.normal(0.15, 0.05, n))
    ramp = on & (phase < 3)
    flow[ramp] = np.array([1.5, 2.7, 3.6])[phase[ramp]] + rng.normal(
        0.0, 0.15, int(ramp.sum())
    )
    flow = np.clip(flow, 0.0, None)

    level1 = np.where(
        on, 1.0 + 7.0 * phase / 40.0, 8.0 - 7.0 * (phase - 40.0) / 40.0
    ) + rng.normal(0.0, 0.08, n)
    level2 = 9.0 - level1 + rng.normal(0.0, 0.1, n)
    pressure = np.where(on, rng.normal(2.8, 0.25, n), rng.normal(1.2, 0.15, n))

    pump_run = on.astype(float)
    pump_status = np.roll(pump_run, 2)
    pump_status[:2] = 0.0

    binary = np.zeros(n, dtype=np.int64)

    a, b, _ = BATCH_WINDOWS[0]
    w = slice(a, b)
    binary[w] = 1
    # Dead capture: every reported value collapses to zero.
    for arr in (temp, flow, level1, level2, pressure, pump_run, pump_status):
        arr[w] = 0.0

    a, b, _ = BATCH_WINDOWS[1]
    k = b - a
    w = slice(a, b)
    binary[w] = 1
    # Manipulation: the pump is forced on continuously while the
    # reported process values stay plausible.  A strong subset also
    # spoofs the second level gauge inconsistently with the first.
    pump_run[w] = 1.0
    pump_status[w] = 1.0
    temp[w] = temp_base[w] + 0.85 + rng.normal(0.0, 0.4, k)
    flow[w] = rng.normal(4.35, 0.55, k)
    pressure[w] = rng.normal(3.0, 0.3, k)
    level1[w] = np.where(
        (np.arange(a, b) % _CYCLE) < 40,
        1.0 + 7.0 * (np.arange(a, b) % _CYCLE) / 40.0,
        8.0 - 7.0 * ((np.arange(a, b) % _CYCLE) - 40.0) / 40.0,
    ) + rng.normal(0.0, 0.3, k)
    level2[w] = 9.0 - level1[w] + rng.normal(0.0, 0.15, k)
    strong = rng.random(k) < 0.35
    level2[w][strong] = rng.uniform(3.0, 6.0, int(strong.sum()))

    s111 = (level1 > 6.0).astype(float)
    s112 = (level1 < 2.0).astype(float)
    s113 = (level2 > 6.0).astype(float)
    b114 = (temp > 22.0).astype(float)
    ball = np.zeros(n)

    a, b, _ = BATCH_WINDOWS[0]
    for arr in (s111, s112, s113, b114):
        arr[a:b] = 0.0

    values = np.column_stack([
        temp, flow, level1, level2, pressure,
        s111, s113, pump_run, pump_status, s112, b114, ball,
    ])
    return Dataset(schema, values, binary)


def delete_mcar(
    d: Dataset, fraction: float, seed: int = 0, protect_timestamp: bool = True
) -> Dataset:
    """Blank a random fraction of value cells, independent of everything.

    The timestamp column is kept intact by default because it is the
    interpolation ordinate.  Labels are never touched.
    """
    if not 0.0 <= fraction < 1.0:
        raise InvalidConfig(f"fraction must be in [0, 1), got {fraction}")
    values = np.array(d.values)
    cols = list(range(values.shape[1]))
    ts = d.schema.timestamp_index
    if protect_timestamp and ts is not None:
        cols.remove(ts)
    rng = np.random.default_rng(seed)
    n_cells = values.shape[0] * len(cols)
    k = int(round(fraction * n_cells))
    flat = rng.choice(n_cells, size=k, replace=False)
    rows = flat // len(cols)
    col_idx = np.asarray(cols)[flat % len(cols)]
    values[rows, col_idx] = np.nan
    return Dataset(
        d.schema, values, d.binary_labels, d.category_labels, d.specific_labels
    )
