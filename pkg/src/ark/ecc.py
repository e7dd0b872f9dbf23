"""GF(256) arithmetic and the two Reed-Solomon layers.

Inner code: RS(255, 223) over GF(2^8)/0x11D, alpha = 2, generator roots
alpha^0..alpha^31. Codewords are stored highest-degree coefficient first, so
octet ``i`` of an ``n``-octet codeword has locator ``alpha^(n-1-i)``; the 32
parity octets follow the 223 message octets.

Outer code: for every byte offset of an emblem group, the ``k`` data octets
form the message of a shortened RS(k+3, k) with generator roots
alpha^0..alpha^2, and the 3 parity emblems carry its parity octets.

Both layers share one errors-and-erasures decoder (Berlekamp-Massey seeded
with the erasure locator, Chien search, Forney).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._jit import njit
from .errors import UnrecoverableCodewordError, UnrecoverableGroupError

PRIM_POLY = 0x11D
N = 255
K = 223
NSYM = N - K
OUTER_PARITY = 3
OUTER_MAX_DATA = 17


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(512, dtype=np.int64)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM_POLY
    exp[255:510] = exp[:255]
    return exp, log


EXP, LOG = _build_tables()


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(EXP[LOG[a] + LOG[b]])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return int(EXP[255 - LOG[a]])


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))


def gf_pow(a: int, e: int) -> int:
    if a == 0:
        return 1 if e == 0 else 0
    return int(EXP[(LOG[a] * e) % 255])


def gf_mul_vec(v: np.ndarray, c: int) -> np.ndarray:
    """Multiply every element of an octet array by the scalar ``c``."""
    v = np.asarray(v, dtype=np.int64)
    if c == 0:
        return np.zeros_like(v)
    out = EXP[LOG[v] + LOG[c]]
    out[v == 0] = 0
    return out


def generator_poly(nsym: int) -> np.ndarray:
    """prod_{i<nsym} (x - alpha^i), highest degree first (monic)."""
    g = [1]
    for i in range(nsym):
        root = int(EXP[i])
        nxt = g + [0]
        for j in range(len(g)):
            nxt[j + 1] ^= gf_mul(g[j], root)
        g = nxt
    return np.array(g, dtype=np.int64)


GEN_INNER = generator_poly(NSYM)
GEN_OUTER = generator_poly(OUTER_PARITY)


# ------------------------------------------------------------- kernels ----

@njit
def _mul(a, b, exp, log):
    if a == 0 or b == 0:
        return 0
    return exp[log[a] + log[b]]


@njit
def _encode_rows(msgs, gen, out):
    """Systematic encoding of each row of ``msgs``; writes full codewords."""
    m, k = msgs.shape
    nsym = gen.shape[0] - 1
    exp, log = _EXP_J, _LOG_J
    rem = np.zeros(nsym, np.int64)
    for r in range(m):
        rem[:] = 0
        for i in range(k):
            out[r, i] = msgs[r, i]
            fb = msgs[r, i] ^ rem[0]
            for j in range(nsym - 1):
                rem[j] = rem[j + 1] ^ _mul(fb, gen[j + 1], exp, log)
            rem[nsym - 1] = _mul(fb, gen[nsym], exp, log)
        for j in range(nsym):
            out[r, k + j] = rem[j]


@njit
def _decode_one(cw, n, nsym, erase, nerase, exp, log):
    """Errors-and-erasures decoding in place. Returns the number of symbols
    changed or filled, or -1 on failure (cw is then left unchanged)."""
    synd = np.zeros(nsym, np.int64)
    nonzero = False
    for j in range(nsym):
        s = 0
        aj = exp[j]
        for i in range(n):
            s = _mul(s, aj, exp, log) ^ cw[i]
        synd[j] = s
        if s != 0:
            nonzero = True
    if nerase > nsym:
        return -1
    if not nonzero:
        return nerase  # erased cells already held the right value

    size = nsym + 2
    # erasure locator Gamma(x) = prod (1 + X_k x), lowest degree first
    lam = np.zeros(size, np.int64)
    lam[0] = 1
    for e in range(nerase):
        xk = exp[(n - 1 - erase[e]) % 255]
        for j in range(e + 1, 0, -1):
            lam[j] ^= _mul(lam[j - 1], xk, exp, log)
    b = lam.copy()
    t = np.zeros(size, np.int64)
    big_l = nerase
    for r in range(nerase + 1, nsym + 1):
        delta = 0
        for j in range(big_l + 1):
            if r - 1 - j >= 0:
                delta ^= _mul(lam[j], synd[r - 1 - j], exp, log)
        # b <- x*b is applied in every branch except the length change
        if delta == 0:
            for j in range(size - 1, 0, -1):
                b[j] = b[j - 1]
            b[0] = 0
            continue
        t[0] = lam[0]
        for j in range(1, size):
            t[j] = lam[j] ^ _mul(delta, b[j - 1], exp, log)
        if 2 * big_l <= r - 1 + nerase:
            inv = exp[255 - log[delta]]
            for j in range(size):
                b[j] = _mul(lam[j], inv, exp, log)
            big_l = r - big_l + nerase
        else:
            for j in range(size - 1, 0, -1):
                b[j] = b[j - 1]
            b[0] = 0
        lam[:] = t

    deg = 0
    for j in range(size):
        if lam[j] != 0:
            deg = j
    nerr = big_l - nerase
    if deg != big_l or 2 * nerr + nerase > nsym:
        return -1

    # Chien search over all field elements; roots must land on real positions
    pos = np.zeros(deg, np.int64)
    nroot = 0
    for k in range(255):
        v = 0
        for j in range(deg, -1, -1):
            v = _mul(v, exp[k], exp, log) ^ lam[j]
        if v == 0:
            # root alpha^k = X^-1  ->  X = alpha^(-k)  ->  position n-1-log X
            p = n - 1 - ((255 - k) % 255)
            if p < 0 or nroot >= deg:
                return -1
            pos[nroot] = p
            nroot += 1
    if nroot != deg:
        return -1

    # Omega = S * Lambda mod x^nsym
    omega = np.zeros(nsym, np.int64)
    for i in range(nsym):
        acc = 0
        for j in range(min(i, deg) + 1):
            acc ^= _mul(synd[i - j], lam[j], exp, log)
        omega[i] = acc

    fixed = cw[:n].copy()
    changed = 0
    for r in range(nroot):
        p = pos[r]
        xl = (n - 1 - p) % 255
        xinv = exp[(255 - xl) % 255]
        num = 0
        for i in range(nsym - 1, -1, -1):
            num = _mul(num, xinv, exp, log) ^ omega[i]
        num = _mul(num, exp[xl], exp, log)
        den = 0
        x2 = _mul(xinv, xinv, exp, log)
        for j in range(deg - (1 - deg % 2), 0, -2):
            den = _mul(den, x2, exp, log) ^ lam[j]
        if den == 0:
            return -1
        mag = _mul(num, exp[255 - log[den]], exp, log)
        fixed[p] ^= mag
        is_erasure = False
        for e in range(nerase):
            if erase[e] == p:
                is_erasure = True
        if mag != 0 and not is_erasure:
            changed += 1

    # the corrected word must be a codeword
    for j in range(nsym):
        s = 0
        aj = exp[j]
        for i in range(n):
            s = _mul(s, aj, exp, log) ^ fixed[i]
        if s != 0:
            return -1
    cw[:n] = fixed
    return changed + nerase


@njit
def _decode_rows(cws, nsym, emask, status):
    m, n = cws.shape
    exp, log = _EXP_J, _LOG_J
    erase = np.zeros(n, np.int64)
    for r in range(m):
        f = 0
        for i in range(n):
            if emask[r, i]:
                erase[f] = i
                f += 1
        status[r] = _decode_one(cws[r], n, nsym, erase, f, exp, log)


@njit
def _decode_columns(mat, nsym, erase):
    """Erasure-decode every column of ``mat`` (rows are code positions)."""
    n, width = mat.shape
    exp, log = _EXP_J, _LOG_J
    col = np.zeros(n, np.int64)
    for c in range(width):
        for i in range(n):
            col[i] = mat[i, c]
        if _decode_one(col, n, nsym, erase, erase.shape[0], exp, log) < 0:
            return c
        for i in range(n):
            mat[i, c] = col[i]
    return -1


_EXP_J = EXP
_LOG_J = LOG


# ------------------------------------------------------------ inner API ----

def rs_encode_blocks(msgs: np.ndarray) -> np.ndarray:
    """Encode an (m, 223) octet array into (m, 255) codewords."""
    msgs = np.asarray(msgs, dtype=np.int64)
    if msgs.ndim != 2 or msgs.shape[1] != K:
        raise ValueError(f"expected (m, {K}) message array, got {msgs.shape}")
    out = np.zeros((msgs.shape[0], N), dtype=np.int64)
    _encode_rows(msgs, GEN_INNER, out)
    return out.astype(np.uint8)


def rs_decode_blocks(cws: np.ndarray, erasures: np.ndarray | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Decode an (m, 255) array. Returns ``(messages, status)`` where status
    is the per-codeword correction count or -1 for an unrecoverable one
    (its message row is then the uncorrected data)."""
    work = np.array(cws, dtype=np.int64, copy=True)
    if work.ndim != 2 or work.shape[1] != N:
        raise ValueError(f"expected (m, {N}) codeword array, got {work.shape}")
    if erasures is None:
        emask = np.zeros(work.shape, dtype=np.bool_)
    else:
        emask = np.asarray(erasures, dtype=np.bool_)
    status = np.zeros(work.shape[0], dtype=np.int64)
    _decode_rows(work, NSYM, emask, status)
    return work[:, :K].astype(np.uint8), status


def rs_encode(msg: bytes | Sequence[int]) -> bytes:
    """Systematic RS(255,223): the 223 message octets followed by 32 parity."""
    msg = bytes(msg)
    if len(msg) != K:
        raise ValueError(f"RS message must be {K} octets, got {len(msg)}")
    return rs_encode_blocks(np.frombuffer(msg, dtype=np.uint8)[None, :])[0].tobytes()


def rs_decode(cw: bytes | Sequence[int], erasures: Iterable[int] = ()) -> tuple[bytes, int]:
    """Return ``(message, corrected)``; raise if the codeword is beyond repair."""
    cw = bytes(cw)
    if len(cw) != N:
        raise ValueError(f"RS codeword must be {N} octets, got {len(cw)}")
    erasures = list(erasures)
    if len(set(erasures)) != len(erasures) or any(not 0 <= e < N for e in erasures):
        raise ValueError("erasure positions must be distinct and in 0..254")
    mask = np.zeros((1, N), dtype=np.bool_)
    mask[0, erasures] = True
    msgs, status = rs_decode_blocks(np.frombuffer(cw, dtype=np.uint8)[None, :], mask)
    if status[0] < 0:
        raise UnrecoverableCodewordError("codeword has more damage than RS(255,223) can repair")
    return msgs[0].tobytes(), int(status[0])


# ------------------------------------------------------------ outer API ----

@dataclass
class OuterGroup:
    data_payloads: list[bytes]
    parity_payloads: list[bytes] = field(default_factory=list)
    group_id: int = 0

    @property
    def k(self) -> int:
        return len(self.data_payloads)

    @property
    def members(self) -> list[bytes]:
        return self.data_payloads + self.parity_payloads


def _check_lengths(payloads: Sequence[bytes]) -> int:
    lengths = {len(p) for p in payloads}
    if len(lengths) > 1:
        raise ValueError(f"group payloads differ in length: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def outer_encode(payloads: Sequence[bytes]) -> list[bytes]:
    """Three parity payloads for ``k`` (1..17) equal-length data payloads."""
    k = len(payloads)
    if not 1 <= k <= OUTER_MAX_DATA:
        raise ValueError(f"outer group needs 1..{OUTER_MAX_DATA} data payloads, got {k}")
    _check_lengths(payloads)
    data = np.stack([np.frombuffer(bytes(p), dtype=np.uint8).astype(np.int64) for p in payloads])
    # column-wise LFSR, vectorized across byte offsets
    rem = np.zeros((OUTER_PARITY, data.shape[1]), dtype=np.int64)
    for i in range(k):
        fb = data[i] ^ rem[0]
        for j in range(OUTER_PARITY - 1):
            rem[j] = rem[j + 1] ^ gf_mul_vec(fb, int(GEN_OUTER[j + 1]))
        rem[OUTER_PARITY - 1] = gf_mul_vec(fb, int(GEN_OUTER[OUTER_PARITY]))
    return [row.astype(np.uint8).tobytes() for row in rem]


def outer_recover(present: Mapping[int, bytes], k: int, group_id: int | None = None) -> list[bytes]:
    """Rebuild all ``k+3`` members of a group from any ``k`` of them."""
    n = k + OUTER_PARITY
    if not 1 <= k <= OUTER_MAX_DATA:
        raise ValueError(f"invalid outer group size k={k}")
    if any(not 0 <= i < n for i in present):
        raise ValueError(f"member index out of range for a {n}-member group")
    if len(present) < k:
        raise UnrecoverableGroupError(
            f"only {len(present)} of {n} members present, need {k}", group_id)
    width = _check_lengths(list(present.values()))
    missing = [i for i in range(n) if i not in present]
    if not missing:
        return [bytes(present[i]) for i in range(n)]
    mat = np.zeros((n, width), dtype=np.int64)
    for i, p in present.items():
        mat[i] = np.frombuffer(bytes(p), dtype=np.uint8)
    bad = _decode_columns(mat, OUTER_PARITY, np.array(missing, dtype=np.int64))
    if bad >= 0:
        raise UnrecoverableGroupError(f"byte column {bad} is inconsistent", group_id)
    return [mat[i].astype(np.uint8).tobytes() for i in range(n)]
