"""Whitespace-separated data files and matching gnuplot scripts."""

from pathlib import Path


def write_dat(path, columns, rows):
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join("NaN" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in row) + "\n")


def write_line_script(path, dat_name, title, xlabel, ylabel, series, logy=False, errorbars=False, png=None):
    """``series`` is a list of (column index, legend); with ``errorbars`` the
    column after each index holds the standard deviation."""
    png = png or Path(dat_name).with_suffix(".png").name
    lines = [
        "set terminal pngcairo size 800,560",
        f"set output '{png}'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key outside right",
    ]
    if logy:
        lines.append("set logscale y")
    style = "yerrorlines" if errorbars else "lines"
    plots = []
    for col, legend in series:
        using = f"1:{col}:{col + 1}" if errorbars else f"1:{col}"
        plots.append(f"'{dat_name}' using {using} with {style} title '{legend}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")
