"""Study-summary CSV files: parsing, writing and the bundled example data."""
import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

from .errors import DataError
from .smd import StudySummary

COLUMNS = ("study", "n_t", "mean_t", "sd_t", "n_c", "mean_c", "sd_c")
EXAMPLES = {"placebo": "placebo_pain.csv", "light": "light_therapy.csv"}


@dataclass
class InputDataset:
    path: str
    studies: list

    def __len__(self):
        return len(self.studies)


def _int_field(raw, name, line):
    if "_" in raw:
        raise DataError(f"column {name!r}: expected an integer, got {raw!r}", line)
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"column {name!r}: expected an integer, got {raw!r}", line) from None


def _float_field(raw, name, line):
    if "_" in raw:
        raise DataError(f"column {name!r}: expected a number, got {raw!r}", line)
    try:
        x = float(raw)
    except ValueError:
        raise DataError(f"column {name!r}: expected a number, got {raw!r}", line) from None
    if not math.isfinite(x):
        raise DataError(f"column {name!r}: value must be finite, got {raw!r}", line)
    return x


def _data_lines(text):
    # yield (line number, text) for non-blank, non-comment lines
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            yield no, line


def parse_text(text, path="<string>"):
    rows = list(_data_lines(text))
    if not rows:
        raise DataError(f"{path}: no data")
    header_line, header = rows[0]
    names = [h.strip() for h in next(csv.reader([header]))]
    missing = [c for c in COLUMNS if c not in names]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}", header_line)
    pos = {c: names.index(c) for c in COLUMNS}
    if len(rows) == 1:
        raise DataError(f"{path}: no data rows after the header")

    studies, seen = [], {}
    for no, line in rows[1:]:
        cells = [c.strip() for c in next(csv.reader([line]))]
        if len(cells) != len(names):
            raise DataError(f"expected {len(names)} fields, got {len(cells)}", no)
        get = {c: cells[pos[c]] for c in COLUMNS}
        sid = get["study"]
        if not sid:
            raise DataError("empty study id", no)
        if sid in seen:
            raise DataError(f"duplicate study id {sid!r} (first seen on line {seen[sid]})", no)
        seen[sid] = no
        n_t = _int_field(get["n_t"], "n_t", no)
        n_c = _int_field(get["n_c"], "n_c", no)
        vals = {c: _float_field(get[c], c, no) for c in ("mean_t", "sd_t", "mean_c", "sd_c")}
        if n_t < 2 or n_c < 2:
            raise DataError(f"study {sid!r}: arm sizes must be at least 2", no)
        for c in ("sd_t", "sd_c"):
            if vals[c] <= 0:
                raise DataError(f"study {sid!r}: {c} must be positive, got {get[c]}", no)
        studies.append(StudySummary(sid, n_t, vals["mean_t"], vals["sd_t"],
                                    n_c, vals["mean_c"], vals["sd_c"]))
    return InputDataset(str(path), studies)


def parse_csv(path):
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path}: not valid UTF-8") from None
    return parse_text(text, path)


def format_csv(studies, comment=None):
    """Serialize StudySummary records so that parse_text reads them back exactly.

    Floats are written with repr; ids are quoted so one starting with "#" is
    not mistaken for a comment.
    """
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_NONNUMERIC)
    w.writerow(COLUMNS)
    for s in studies:
        if len(s.id.splitlines()) != 1 or s.id != s.id.strip():
            raise DataError(f"study id {s.id!r} cannot be written to CSV")
        w.writerow([s.id, int(s.n_t), float(s.mean_t), float(s.sd_t),
                    int(s.n_c), float(s.mean_c), float(s.sd_c)])
    return buf.getvalue()


def write_csv(path, studies, comment=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(studies, comment))


def example_path(name):
    """Filesystem path of a bundled dataset ("placebo" or "light")."""
    try:
        fname = EXAMPLES[name]
    except KeyError:
        raise ValueError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
    return str(resources.files("metaq") / "data" / fname)


def load_example(name):
    return parse_csv(example_path(name))
