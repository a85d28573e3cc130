import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib import rcParams

rcParams['figure.figsize'] = [14, 8]
plt.rcParams.update({'font.size': 18})

output_dir = sys.argv[1] if len(sys.argv) > 1 else 'kdvist-output'
overlay = pd.read_csv(f'{output_dir}/crosscheck/overlay.csv')
table = pd.read_csv(f'{output_dir}/crosscheck/crosscheck.csv')
print(table.to_string(index=False))

times = sorted(overlay['t'].unique())
metadata = {
    "q_ist": {"marker": "-", "color": "#332288", "label": "inverse scattering"},
    "q_pde": {"marker": "--", "color": "#BD7105", "label": "pseudo-spectral"},
}

fig, axes = plt.subplots(2, len(times), sharex=True, squeeze=False)
for column, t in enumerate(times):
    snapshot = overlay[overlay['t'] == t].sort_values('x')
    top, bottom = axes[0][column], axes[1][column]
    top.grid(linestyle="--")
    for name, style in metadata.items():
        top.plot(snapshot['x'], snapshot[name], style["marker"], color=style["color"], label=style["label"])
    top.set_title(f't = {t:g}')
    bottom.grid(linestyle="--")
    bottom.semilogy(snapshot['x'], np.abs(snapshot['q_ist'] - snapshot['q_pde']) + 1e-16, "-", color="#005F20")
    bottom.set_xlabel("x")
axes[0][0].set_ylabel("q(x, t)")
axes[1][0].set_ylabel("|difference|")
axes[0][0].legend(loc="lower right")
plt.tight_layout()
plt.savefig("crosscheck_overlay.pdf")
plt.show()
