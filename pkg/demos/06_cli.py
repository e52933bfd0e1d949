# %% [markdown]
# # Running presets from Python
#
# The command line tool reads INI configs; shipped presets can be used by name.
# This is the same as `mott-register simulate fig3-small --out <dir>`.

# %%
import csv
import tempfile
from pathlib import Path

from mott_register.cli import main, preset_names, preset_text

print("presets:", ", ".join(preset_names()))
print(preset_text("fig3-small"))

with tempfile.TemporaryDirectory() as tmp:
    main(["simulate", "fig3-small", "--out", tmp])
    with open(Path(tmp) / "temperatures.csv") as fh:
        print(next(csv.DictReader(fh)))
