"""Deterministic synthetic flow records in the UNSW-NB15 and NSL-KDD layouts.

The real datasets are not redistributable with the package, so desk-scale
runs use records drawn from hand-set per-category traffic profiles.  Derived
columns are computed from the drawn packet counts, sizes and durations the way
the UNSW feature extractor defines them (``sbytes = spkts * smean``,
``sload = 8 * sbytes / dur`` and so on), so the usual redundancy between
attributes is present.  A fraction of attack rows is drawn from the Normal
profile ("camouflaged") to keep the task from being separable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_ingest import NSLKDD_COLUMNS, UNSW_COLUMNS

# Category shares of UNSW_NB15_training-set.csv (175,341 rows).
UNSW_TRAINING_SHARES = {
    "Normal": 56000,
    "Generic": 40000,
    "Exploits": 33393,
    "Fuzzers": 18184,
    "DoS": 12264,
    "Reconnaissance": 10491,
    "Analysis": 2000,
    "Backdoor": 1746,
    "Shellcode": 1133,
    "Worms": 130,
}

PROTOS = ("tcp", "udp", "arp", "ospf", "unas", "sctp", "any", "gre", "ipv6", "sep", "pim", "mobile")
SERVICES = ("-", "http", "dns", "ftp", "ftp-data", "smtp", "pop3", "ssh", "snmp", "ssl", "dhcp", "irc", "radius")


@dataclass(frozen=True)
class Profile:
    proto: dict
    service: dict
    spkts: tuple[float, float]  # log-normal (mu, sigma)
    dpkts: tuple[float, float]
    smean: tuple[float, float]
    dmean: tuple[float, float]
    dur: tuple[float, float]
    sttl: dict
    dttl: dict
    ct: tuple[float, float]
    synack: tuple[float, float]
    jitter: float
    camouflage: float = 0.0


_OTHER = {p: 1.0 for p in PROTOS[2:]}


def _mix(main: dict, other_mass: float = 0.0) -> dict:
    out = dict(main)
    if other_mass:
        share = other_mass / len(_OTHER)
        for p in _OTHER:
            out[p] = out.get(p, 0.0) + share
    return out


UNSW_PROFILES = {
    "Normal": Profile(
        proto=_mix({"tcp": 0.74, "udp": 0.24}, 0.02),
        service={"-": 0.42, "http": 0.14, "dns": 0.16, "ftp-data": 0.08, "smtp": 0.07,
                 "ftp": 0.05, "ssh": 0.04, "pop3": 0.02, "ssl": 0.01, "snmp": 0.01},
        spkts=(2.6, 1.2), dpkts=(2.5, 1.4), smean=(4.4, 0.8), dmean=(5.4, 1.3),
        dur=(-0.6, 1.6), sttl={31: 0.86, 62: 0.11, 254: 0.03}, dttl={29: 0.9, 252: 0.04, 0: 0.06},
        ct=(1.5, 0.8), synack=(-4.5, 1.0), jitter=0.6,
    ),
    "DoS": Profile(
        proto=_mix({"tcp": 0.52, "udp": 0.28}, 0.20),
        service={"-": 0.62, "http": 0.2, "dns": 0.08, "ftp": 0.03, "smtp": 0.04, "pop3": 0.03},
        spkts=(1.8, 1.0), dpkts=(1.0, 1.2), smean=(5.8, 0.7), dmean=(3.6, 1.0),
        dur=(-1.1, 1.7), sttl={254: 0.88, 62: 0.12}, dttl={252: 0.62, 0: 0.38},
        ct=(2.2, 0.9), synack=(-3.6, 1.2), jitter=1.4, camouflage=0.07,
    ),
    "Fuzzers": Profile(
        proto=_mix({"tcp": 0.6, "udp": 0.35}, 0.05),
        service={"-": 0.74, "http": 0.1, "ftp": 0.05, "smtp": 0.04, "dns": 0.04, "ssh": 0.03},
        spkts=(2.3, 0.8), dpkts=(1.6, 1.0), smean=(5.0, 0.9), dmean=(3.8, 0.8),
        dur=(-0.2, 1.3), sttl={254: 0.7, 62: 0.3}, dttl={252: 0.5, 29: 0.2, 0: 0.3},
        ct=(1.8, 0.8), synack=(-3.2, 1.1), jitter=2.2, camouflage=0.06,
    ),
    "Exploits": Profile(
        proto=_mix({"tcp": 0.8, "udp": 0.12}, 0.08),
        service={"-": 0.42, "http": 0.3, "smtp": 0.08, "ftp": 0.06, "dns": 0.08, "pop3": 0.03, "ssl": 0.03},
        spkts=(2.8, 1.0), dpkts=(2.2, 1.2), smean=(6.2, 0.7), dmean=(5.0, 1.3),
        dur=(-0.4, 1.5), sttl={254: 0.6, 62: 0.35, 31: 0.05}, dttl={252: 0.6, 29: 0.2, 0: 0.2},
        ct=(1.7, 0.8), synack=(-3.4, 1.0), jitter=1.1, camouflage=0.06,
    ),
    "Generic": Profile(
        proto=_mix({"udp": 0.86, "tcp": 0.1}, 0.04),
        service={"dns": 0.8, "-": 0.12, "http": 0.04, "smtp": 0.02, "snmp": 0.02},
        spkts=(0.7, 0.3), dpkts=(0.3, 0.4), smean=(4.0, 0.2), dmean=(3.2, 0.6),
        dur=(-8.0, 1.5), sttl={254: 0.95, 62: 0.05}, dttl={0: 0.9, 252: 0.1},
        ct=(3.0, 0.7), synack=(-3.0, 1.0), jitter=0.2, camouflage=0.03,
    ),
    "Reconnaissance": Profile(
        proto=_mix({"tcp": 0.5, "udp": 0.3}, 0.2),
        service={"-": 0.8, "http": 0.08, "dns": 0.06, "snmp": 0.04, "ssh": 0.02},
        spkts=(1.5, 0.8), dpkts=(0.9, 0.9), smean=(4.2, 0.5), dmean=(3.6, 0.7),
        dur=(-1.8, 1.6), sttl={254: 0.8, 62: 0.2}, dttl={252: 0.55, 0: 0.45},
        ct=(2.0, 0.8), synack=(-3.3, 1.0), jitter=0.9, camouflage=0.05,
    ),
    "Analysis": Profile(
        proto=_mix({"tcp": 0.4, "udp": 0.1}, 0.5),
        service={"-": 0.8, "http": 0.2},
        spkts=(1.2, 0.6), dpkts=(0.5, 0.6), smean=(5.0, 0.5), dmean=(3.0, 0.5),
        dur=(-3.0, 2.0), sttl={254: 0.9, 62: 0.1}, dttl={0: 0.7, 252: 0.3},
        ct=(1.8, 0.7), synack=(-3.0, 1.0), jitter=0.8, camouflage=0.05,
    ),
    "Backdoor": Profile(
        proto=_mix({"tcp": 0.55, "udp": 0.2}, 0.25),
        service={"-": 0.7, "http": 0.18, "ftp": 0.06, "irc": 0.06},
        spkts=(2.0, 0.6), dpkts=(1.4, 0.8), smean=(5.4, 0.5), dmean=(3.2, 0.6),
        dur=(-1.5, 1.0), sttl={254: 0.85, 62: 0.15}, dttl={252: 0.7, 0: 0.3},
        ct=(2.1, 0.7), synack=(-3.5, 0.9), jitter=1.2, camouflage=0.05,
    ),
    "Shellcode": Profile(
        proto=_mix({"tcp": 0.6, "udp": 0.3}, 0.1),
        service={"-": 0.85, "http": 0.1, "ftp": 0.05},
        spkts=(1.6, 0.5), dpkts=(1.0, 0.6), smean=(5.9, 0.4), dmean=(3.4, 0.5),
        dur=(-1.0, 1.0), sttl={254: 0.9, 62: 0.1}, dttl={252: 0.75, 0: 0.25},
        ct=(1.6, 0.7), synack=(-3.6, 1.0), jitter=1.0, camouflage=0.05,
    ),
    "Worms": Profile(
        proto=_mix({"tcp": 0.9, "udp": 0.08}, 0.02),
        service={"http": 0.6, "-": 0.3, "smtp": 0.1},
        spkts=(2.5, 0.5), dpkts=(2.0, 0.6), smean=(6.5, 0.4), dmean=(5.0, 0.8),
        dur=(-0.5, 1.0), sttl={254: 0.9, 62: 0.1}, dttl={252: 0.9, 0: 0.1},
        ct=(1.5, 0.6), synack=(-3.5, 1.0), jitter=1.0, camouflage=0.05,
    ),
}

_TCP_STATES = ("FIN", "CON", "REQ", "RST", "ACC")
_UDP_STATES = ("INT", "CON", "REQ")


def class_counts(n_rows: int, shares: dict[str, int] = UNSW_TRAINING_SHARES,
                 minimum: int = 2) -> dict[str, int]:
    """Largest-remainder allocation of ``n_rows`` over ``shares``."""
    total = sum(shares.values())
    raw = {c: n_rows * s / total for c, s in shares.items()}
    counts = {c: max(int(v), minimum) for c, v in raw.items()}
    leftover = n_rows - sum(counts.values())
    for c in sorted(raw, key=lambda c: raw[c] - int(raw[c]), reverse=True):
        if leftover <= 0:
            break
        counts[c] += 1
        leftover -= 1
    return counts


def _choice(rng, dist: dict, size: int):
    keys = list(dist)
    p = np.array([dist[k] for k in keys], dtype=float)
    return np.array(keys, dtype=object)[rng.choice(len(keys), size=size, p=p / p.sum())]


def _lognormal(rng, params, size):
    mu, sigma = params
    return rng.lognormal(mu, sigma, size)


def _draw_profile(rng, prof: Profile, n: int) -> dict[str, np.ndarray]:
    proto = _choice(rng, prof.proto, n)
    service = _choice(rng, prof.service, n)
    is_tcp = proto == "tcp"
    is_udp = proto == "udp"
    # dns over tcp/others is rare; snap service to '-' off udp/tcp
    service = np.where(~(is_tcp | is_udp), "-", service)
    state = np.where(
        is_tcp,
        np.array(_TCP_STATES, dtype=object)[rng.choice(5, n, p=[0.72, 0.1, 0.1, 0.04, 0.04])],
        np.where(is_udp,
                 np.array(_UDP_STATES, dtype=object)[rng.choice(3, n, p=[0.7, 0.25, 0.05])],
                 "INT"),
    )
    spkts = np.maximum(1, np.round(_lognormal(rng, prof.spkts, n)))
    dpkts = np.round(_lognormal(rng, prof.dpkts, n))
    dpkts = np.where(state == "INT", 0, np.maximum(dpkts, 0))
    smean = np.clip(np.round(_lognormal(rng, prof.smean, n)), 24, 1504)
    dmean = np.where(dpkts > 0, np.clip(np.round(_lognormal(rng, prof.dmean, n)), 0, 1504), 0)
    dur = _lognormal(rng, prof.dur, n)
    dur = np.where(spkts + dpkts <= 1, 0.0, dur)
    sbytes = spkts * smean
    dbytes = dpkts * dmean
    pkts = spkts + dpkts
    safe = np.where(dur > 0, dur, 1.0)
    rate = np.where(dur > 0, (pkts - 1) / safe, 0.0)
    sload = np.where(dur > 0, 8 * sbytes / safe, 0.0)
    dload = np.where(dur > 0, 8 * dbytes / safe, 0.0)
    sttl = _choice(rng, prof.sttl, n).astype(float)
    dttl = _choice(rng, prof.dttl, n).astype(float)
    dttl = np.where(dpkts == 0, 0.0, dttl)
    loss_p = 0.02 if prof.jitter < 1 else 0.06
    sloss = rng.binomial(spkts.astype(int), loss_p).astype(float)
    dloss = rng.binomial(dpkts.astype(int), loss_p).astype(float)
    sinpkt = np.where(spkts > 1, 1000 * dur / np.maximum(spkts - 1, 1), 0.0)
    dinpkt = np.where(dpkts > 1, 1000 * dur / np.maximum(dpkts - 1, 1), 0.0)
    sjit = sinpkt * rng.lognormal(np.log(max(prof.jitter, 1e-3)), 0.5, n)
    djit = dinpkt * rng.lognormal(np.log(max(prof.jitter, 1e-3)), 0.5, n)
    swin = np.where(is_tcp, 255.0, 0.0)
    dwin = np.where(is_tcp & (dpkts > 0), 255.0, 0.0)
    stcpb = np.where(is_tcp, rng.integers(0, 2**32, n), 0).astype(float)
    dtcpb = np.where(is_tcp & (dpkts > 0), rng.integers(0, 2**32, n), 0).astype(float)
    synack = np.where(is_tcp, _lognormal(rng, prof.synack, n), 0.0)
    ackdat = np.where(is_tcp, _lognormal(rng, (prof.synack[0] + 0.2, prof.synack[1]), n), 0.0)
    tcprtt = synack + ackdat
    http = service == "http"
    ftp = service == "ftp"
    trans_depth = np.where(http, rng.integers(0, 3, n), 0).astype(float)
    response_body_len = np.where(http & (dbytes > 0), np.round(dbytes * rng.uniform(0, 0.9, n)), 0.0)
    ct_flw_http_mthd = np.where(http, rng.integers(0, 4, n), 0).astype(float)
    is_ftp_login = np.where(ftp, rng.integers(0, 2, n), 0).astype(float)
    ct_ftp_cmd = is_ftp_login * rng.integers(0, 3, n)

    def ct(shift=0.0):
        return np.maximum(1, np.round(_lognormal(rng, (prof.ct[0] + shift, prof.ct[1]), n)))

    ct_srv_src = ct()
    ct_dst_ltm = ct(-0.3)
    ct_src_dport_ltm = ct(-0.4)
    ct_dst_sport_ltm = ct(-0.6)
    ct_dst_src_ltm = ct()
    ct_src_ltm = ct(-0.2)
    ct_srv_dst = ct()
    ct_state_ttl = np.select(
        [(sttl == 254) & (dttl == 252), (sttl == 254), (sttl == 62) & (dttl == 252), sttl == 62],
        [1.0, 2.0, 1.0, 3.0], default=0.0,
    )
    ct_state_ttl = np.where((state == "REQ") & (sttl == 254), 4.0, ct_state_ttl)
    is_sm_ips_ports = (rng.uniform(size=n) < 0.01).astype(float)
    return {
        "dur": dur, "proto": proto, "service": service, "state": state,
        "spkts": spkts, "dpkts": dpkts, "sbytes": sbytes, "dbytes": dbytes,
        "rate": rate, "sttl": sttl, "dttl": dttl, "sload": sload, "dload": dload,
        "sloss": sloss, "dloss": dloss, "sinpkt": sinpkt, "dinpkt": dinpkt,
        "sjit": sjit, "djit": djit, "swin": swin, "stcpb": stcpb, "dtcpb": dtcpb,
        "dwin": dwin, "tcprtt": tcprtt, "synack": synack, "ackdat": ackdat,
        "smean": smean, "dmean": dmean, "trans_depth": trans_depth,
        "response_body_len": response_body_len, "ct_srv_src": ct_srv_src,
        "ct_state_ttl": ct_state_ttl, "ct_dst_ltm": ct_dst_ltm,
        "ct_src_dport_ltm": ct_src_dport_ltm, "ct_dst_sport_ltm": ct_dst_sport_ltm,
        "ct_dst_src_ltm": ct_dst_src_ltm, "is_ftp_login": is_ftp_login,
        "ct_ftp_cmd": ct_ftp_cmd, "ct_flw_http_mthd": ct_flw_http_mthd,
        "ct_src_ltm": ct_src_ltm, "ct_srv_dst": ct_srv_dst,
        "is_sm_ips_ports": is_sm_ips_ports,
    }


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.6g}"


def generate_unsw(n_rows: int = 28000, seed: int = 7,
                  counts: dict[str, int] | None = None) -> list[list[str]]:
    """Rows (header first) of a synthetic UNSW-NB15 training-set style CSV."""
    rng = np.random.default_rng(seed)
    counts = counts if counts is not None else class_counts(n_rows)
    feature_cols = UNSW_COLUMNS[1:-2]
    records: list[list] = []
    for cls in UNSW_PROFILES:
        n = counts.get(cls, 0)
        if n == 0:
            continue
        prof = UNSW_PROFILES[cls]
        own = _draw_profile(rng, prof, n)
        if prof.camouflage:
            disguised = rng.uniform(size=n) < prof.camouflage
            if disguised.any():
                normal = _draw_profile(rng, UNSW_PROFILES["Normal"], n)
                for col in feature_cols:
                    own[col] = np.where(disguised, normal[col], own[col])
        label = "0" if cls == "Normal" else "1"
        for i in range(n):
            records.append([own[c][i] for c in feature_cols] + [cls, label])
    order = rng.permutation(len(records))
    rows = [list(UNSW_COLUMNS)]
    for new_id, k in enumerate(order, start=1):
        rows.append([str(new_id)] + [_fmt(v) for v in records[k]])
    return rows


def write_unsw(path, n_rows: int = 28000, seed: int = 7, counts: dict[str, int] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(generate_unsw(n_rows, seed, counts))
    return path


# NSL-KDD: a coarse profile per attack name, enough for loader/CLI runs.
_NSL_PROFILES = {
    "normal": dict(proto={"tcp": 0.8, "udp": 0.15, "icmp": 0.05}, service=("http", "smtp", "ftp_data", "domain_u", "private"),
                   flag={"SF": 0.9, "REJ": 0.05, "S0": 0.05}, src=(6.0, 1.5), dst=(7.0, 2.0), count=(1.5, 1.0), serror=0.02),
    "neptune": dict(proto={"tcp": 1.0}, service=("private", "http", "telnet", "ftp_data"),
                    flag={"S0": 0.85, "REJ": 0.15}, src=(-5.0, 0.1), dst=(-5.0, 0.1), count=(5.3, 0.4), serror=0.95),
    "smurf": dict(proto={"icmp": 1.0}, service=("ecr_i",), flag={"SF": 1.0},
                  src=(6.9, 0.3), dst=(-5.0, 0.1), count=(6.2, 0.1), serror=0.0),
    "ipsweep": dict(proto={"icmp": 0.9, "tcp": 0.1}, service=("eco_i", "private"), flag={"SF": 0.9, "REJ": 0.1},
                    src=(2.0, 0.5), dst=(-5.0, 0.1), count=(0.5, 0.5), serror=0.0),
    "satan": dict(proto={"tcp": 0.7, "udp": 0.3}, service=("private", "other", "telnet"),
                  flag={"REJ": 0.6, "SF": 0.2, "S0": 0.2}, src=(1.0, 1.0), dst=(1.0, 1.0), count=(3.0, 1.0), serror=0.2),
    "guess_passwd": dict(proto={"tcp": 1.0}, service=("telnet", "pop_3", "imap4"), flag={"SF": 0.8, "RSTO": 0.2},
                         src=(4.0, 0.3), dst=(4.5, 0.3), count=(0.2, 0.3), serror=0.0),
}


def generate_nslkdd(n_rows: int = 600, seed: int = 11) -> list[list[str]]:
    """Headerless NSL-KDD style rows (41 features, label, difficulty)."""
    rng = np.random.default_rng(seed)
    shares = {"normal": 53, "neptune": 33, "smurf": 2, "ipsweep": 3, "satan": 3, "guess_passwd": 1}
    counts = class_counts(n_rows, shares)
    rows = []
    for label, n in counts.items():
        prof = _NSL_PROFILES[label]
        proto = _choice(rng, prof["proto"], n)
        flag = _choice(rng, prof["flag"], n)
        service = np.array(prof["service"], dtype=object)[rng.integers(0, len(prof["service"]), n)]
        src = np.maximum(0, np.round(rng.lognormal(*prof["src"], n)))
        dst = np.maximum(0, np.round(rng.lognormal(*prof["dst"], n)))
        count = np.clip(np.round(rng.lognormal(*prof["count"], n)), 1, 511)
        for i in range(n):
            serror = float(np.clip(prof["serror"] + rng.normal(0, 0.03), 0, 1))
            same_srv = float(np.clip(rng.uniform(0.6, 1.0) if label == "normal" else rng.uniform(0, 0.4), 0, 1))
            feats = [
                0 if label != "guess_passwd" else int(rng.integers(0, 5)),
                proto[i], service[i], flag[i], int(src[i]), int(dst[i]),
                0, 0, 0, int(label == "guess_passwd"), int(label == "guess_passwd"),
                int(flag[i] == "SF" and proto[i] == "tcp"), 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                int(count[i]), int(max(1, count[i] * rng.uniform(0.05, 1.0))),
                round(serror, 2), round(serror, 2), round(1 - serror if flag[i] == "REJ" else 0.0, 2),
                round(1 - serror if flag[i] == "REJ" else 0.0, 2), round(same_srv, 2),
                round(1 - same_srv, 2) if label != "normal" else 0.0, 0.0,
                int(rng.integers(1, 256)), int(rng.integers(1, 256)), round(same_srv, 2),
                round(1 - same_srv, 2), round(float(rng.uniform()), 2), 0.0,
                round(serror, 2), round(serror, 2), 0.0, 0.0,
            ]
            rows.append([_fmt(v) for v in feats] + [label, str(int(rng.integers(10, 22)))])
    order = rng.permutation(len(rows))
    return [rows[k] for k in order]


def write_nslkdd(path, n_rows: int = 600, seed: int = 11) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = generate_nslkdd(n_rows, seed)
    assert all(len(r) == len(NSLKDD_COLUMNS) for r in rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return path
