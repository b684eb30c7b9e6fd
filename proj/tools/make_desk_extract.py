"""Writes the bundled example data under data/.

hnscc_desk/ is a small synthetic stand-in for a tumour single-cell
expression matrix: TPM values, genes as rows, cells as columns, with a
cell_id,label file. Macrophages differ strongly from B cells, mast cells sit
between the two but much closer to B cells. Only genes with a high enough
aggregate expression carry the group differences; the rest are low and get
removed by the default filter.

toy_null.csv and toy_shift.csv are grouped CSVs with three groups; in the
second one group 3 is shifted by 5 standard deviations in every feature.

    python3 tools/make_desk_extract.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

SEED = 20240611


def desk_extract(rng):
    counts = {"B cell": 46, "Macrophage": 33, "Mast": 40, "T cell": 30}
    n_high, n_low = 300, 500

    base = np.concatenate([rng.uniform(7.0, 10.0, n_high), rng.uniform(0.5, 4.0, n_low)])
    mac = np.zeros(base.size)
    idx = rng.choice(n_high, 60, replace=False)
    mac[idx] = rng.choice([-1.0, 1.0], idx.size) * rng.uniform(0.5, 1.0, idx.size)
    mast = 0.2 * mac
    own = rng.choice(n_high, 15, replace=False)
    mast[own] += rng.choice([-1.0, 1.0], own.size) * 0.25
    tcell = np.zeros(base.size)
    tcell[rng.choice(n_high, 40, replace=False)] = 1.0

    shift = {"B cell": 0.0, "Macrophage": mac, "Mast": mast, "T cell": tcell}
    cols, labels = [], []
    for label, n in counts.items():
        for k in range(n):
            cell_effect = rng.normal(0.0, 0.3)  # library-size like factor
            logv = base + shift[label] + cell_effect + rng.normal(0.0, 1.0, base.size)
            cols.append(np.maximum(np.exp2(logv) - 1.0, 0.0))
            labels.append(label)
    values = np.column_stack(cols)
    order = rng.permutation(values.shape[1])  # interleave cell types
    values, labels = values[:, order], [labels[i] for i in order]
    cell_ids = [f"cell{i + 1:04d}" for i in range(values.shape[1])]
    genes = [f"G{i + 1:04d}" for i in range(values.shape[0])]
    return genes, cell_ids, labels, values


def grouped_csv(rng, shift):
    sizes, p = (20, 22, 18), 50
    lines = ["group," + ",".join(f"x{j + 1}" for j in range(p))]
    for g, n in enumerate(sizes):
        x = rng.normal(0.0, 1.0, (n, p)) + (shift if g == 2 else 0.0)
        lines += [f"g{g + 1}," + ",".join(f"{v:.6f}" for v in row) for row in x]
    return "\n".join(lines) + "\n"


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    rng = np.random.default_rng(SEED)
    genes, cells, labels, values = desk_extract(rng)
    desk = out / "hnscc_desk"
    desk.mkdir(parents=True, exist_ok=True)
    with open(desk / "expression.csv", "w") as f:
        f.write("gene," + ",".join(cells) + "\n")
        for g, row in zip(genes, values):
            f.write(g + "," + ",".join(f"{v:.3f}" for v in row) + "\n")
    with open(desk / "labels.csv", "w") as f:
        f.write("cell_id,label\n")
        f.writelines(f"{c},{l}\n" for c, l in zip(cells, labels))
    (out / "toy_null.csv").write_text(grouped_csv(rng, 0.0))
    (out / "toy_shift.csv").write_text(grouped_csv(rng, 5.0))


if __name__ == "__main__":
    main()
