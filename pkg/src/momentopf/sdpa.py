"""SDPA sparse format (.dat-s) export and an independent parser.

The file encodes: minimize c.x subject to X = sum_i x_i F_i - F0 being
positive semidefinite block-diagonal.  Our LMI-form problems map directly:
x is the vector of free moment variables (pinned variables substituted
away), each symbolic block contributes its coefficient matrices as F_i and
its constant part as -F0, and each zero block is emitted as a +/- pair of
blocks for maximal compatibility with external solvers.

Layout: optional comment lines prefixed with '"' (here carrying the
moment-basis legend), then the number of variables, the number of blocks,
the block sizes (negative marks a diagonal block), the objective vector,
and one  "matno blkno i j value"  line per upper-triangle entry with
1-based indices; matno 0 addresses F0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .moment import SdpProblem


class SdpaFormatError(ValueError):
    """Raised by the parser on malformed input."""


@dataclass
class SdpaData:
    """Parsed contents of an SDPA sparse file."""

    num_vars: int
    block_sizes: list[int]
    objective: np.ndarray
    # entries[(matno, blkno)][(i, j)] = value, 1-based upper-triangle keys
    entries: dict[tuple[int, int], dict[tuple[int, int], float]]
    comments: list[str] = field(default_factory=list)

    def dense_matrix(self, matno: int, blkno: int) -> np.ndarray:
        """Dense symmetric matrix for one block of F_matno."""
        size = abs(self.block_sizes[blkno - 1])
        out = np.zeros((size, size))
        for (i, j), val in self.entries.get((matno, blkno), {}).items():
            out[i - 1, j - 1] = val
            out[j - 1, i - 1] = val
        return out


def _free_variables(prob: SdpProblem) -> list[int]:
    return [p for p in range(prob.num_vars) if p not in prob.fixed_vars]


def _entry_rows(block, fixed, col_of):
    """Yield (i, j, const, {var: coef}) for the upper triangle of a block."""
    for i in range(block.dim):
        for j in range(i, block.dim):
            const = 0.0
            coefs: dict[int, float] = {}
            for pos, coef in block.entries[i][j].coeffs.items():
                if pos in fixed:
                    const += coef * fixed[pos]
                else:
                    coefs[col_of[pos]] = coefs.get(col_of[pos], 0.0) + coef
            yield i, j, const, coefs


def export_sdpa(prob: SdpProblem, comment: str = "") -> str:
    """Serialize an LMI-form problem to SDPA sparse format."""
    free = _free_variables(prob)
    col_of = {pos: i + 1 for i, pos in enumerate(free)}  # 1-based variable ids

    lines: list[str] = []
    if comment:
        for raw in comment.splitlines():
            lines.append(f'"{raw}')
    lines.append(f'"LMI-form conic program over {len(free)} moment variables')
    if prob.fixed_vars:
        pinned = ", ".join(
            f"y[{pos}]={val!r}" for pos, val in sorted(prob.fixed_vars.items())
        )
        lines.append(f'"pinned: {pinned}')
    if prob.index is not None:
        names = ", ".join(prob.variable_names) if prob.variable_names else ""
        if names:
            lines.append(f'"monomial variables: {names}')
        for i, pos in enumerate(free):
            exps = "".join(str(e) for e in prob.index.exponents[pos])
            lines.append(f'"x{i + 1} = y_{exps}')

    blocks: list[tuple[int, object, float]] = []  # (signed size, block, sign)
    labels: list[str] = []
    for blk in prob.psd_blocks:
        blocks.append((blk.dim, blk, 1.0))
        labels.append(blk.label)
    for blk in prob.zero_blocks:
        blocks.append((blk.dim, blk, 1.0))
        labels.append(f"{blk.label} (+)")
        blocks.append((blk.dim, blk, -1.0))
        labels.append(f"{blk.label} (-)")
    for no, label in enumerate(labels, start=1):
        lines.append(f'"block {no}: {label}')

    obj = np.zeros(len(free))
    const_obj = 0.0
    for pos, coef in prob.objective.coeffs.items():
        if pos in prob.fixed_vars:
            const_obj += coef * prob.fixed_vars[pos]
        else:
            obj[col_of[pos] - 1] = coef
    if const_obj:
        lines.append(f'"objective constant offset: {const_obj!r}')
    lines.append(str(len(free)))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(size) for size, _, _ in blocks))
    lines.append(" ".join(repr(float(v)) for v in obj))

    for blkno, (_, blk, sign) in enumerate(blocks, start=1):
        for i, j, const, coefs in _entry_rows(blk, prob.fixed_vars, col_of):
            if const != 0.0:
                # X = sum x_i F_i - F0  with the block equal to const + coefs.y
                lines.append(f"0 {blkno} {i + 1} {j + 1} {float(-sign * const)!r}")
            for col, coef in sorted(coefs.items()):
                if coef != 0.0:
                    lines.append(f"{col} {blkno} {i + 1} {j + 1} {float(sign * coef)!r}")
    return "\n".join(lines) + "\n"


def parse_sdpa(text: str) -> SdpaData:
    """Parse SDPA sparse format; tolerant of {}, () and , in header lines."""
    comments: list[str] = []
    body: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped[0] in '"*':
            comments.append(stripped[1:])
        else:
            body.append(stripped)
    if len(body) < 4:
        raise SdpaFormatError("file too short: need 4 header lines")

    def clean(s: str) -> list[str]:
        for ch in "{}(),":
            s = s.replace(ch, " ")
        return s.split()

    try:
        num_vars = int(clean(body[0])[0])
        num_blocks = int(clean(body[1])[0])
        block_sizes = [int(tok) for tok in clean(body[2])]
        objective = np.array([float(tok) for tok in clean(body[3])])
    except (ValueError, IndexError) as exc:
        raise SdpaFormatError(f"malformed header: {exc}") from exc
    if len(block_sizes) != num_blocks:
        raise SdpaFormatError(
            f"expected {num_blocks} block sizes, found {len(block_sizes)}"
        )
    if len(objective) != num_vars:
        raise SdpaFormatError(
            f"expected {num_vars} objective entries, found {len(objective)}"
        )

    entries: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    for lineno, line in enumerate(body[4:], start=5):
        toks = clean(line)
        if len(toks) != 5:
            raise SdpaFormatError(f"entry line {lineno}: expected 5 fields, got {len(toks)}")
        try:
            matno, blkno, i, j = (int(t) for t in toks[:4])
            val = float(toks[4])
        except ValueError as exc:
            raise SdpaFormatError(f"entry line {lineno}: {exc}") from exc
        if not (0 <= matno <= num_vars):
            raise SdpaFormatError(f"entry line {lineno}: matrix id {matno} out of range")
        if not (1 <= blkno <= num_blocks):
            raise SdpaFormatError(f"entry line {lineno}: block id {blkno} out of range")
        size = abs(block_sizes[blkno - 1])
        if not (1 <= i <= j <= size):
            raise SdpaFormatError(
                f"entry line {lineno}: indices ({i}, {j}) invalid for block size {size}"
            )
        if block_sizes[blkno - 1] < 0 and i != j:
            raise SdpaFormatError(
                f"entry line {lineno}: off-diagonal entry in diagonal block {blkno}"
            )
        entries.setdefault((matno, blkno), {})[(i, j)] = val
    return SdpaData(
        num_vars=num_vars,
        block_sizes=block_sizes,
        objective=objective,
        entries=entries,
        comments=comments,
    )
