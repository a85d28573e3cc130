import sys

import matplotlib.pyplot as plt
import pandas as pd
from matplotlib import rcParams

rcParams['figure.figsize'] = [12, 5]
plt.rcParams.update({'font.size': 18})

output_dir = sys.argv[1] if len(sys.argv) > 1 else 'kdvist-output'
field = pd.read_csv(f'{output_dir}/reconstruct/field.csv')

q = field.pivot(index='t', columns='x', values='q')
print(f'{q.shape[1]} x-points, {q.shape[0]} time(s), min q = {field["q"].min():.6g}')

if q.shape[0] == 1:
    # a single time slice reads better as a profile
    plt.grid(linestyle="--")
    plt.plot(q.columns, q.iloc[0], "-o", color="#332288", label=f't = {q.index[0]:g}')
    plt.legend(loc="lower right")
    plt.ylabel("q(x, t)")
else:
    mesh = plt.pcolormesh(q.columns, q.index, q.values, shading="nearest", cmap="viridis")
    plt.colorbar(mesh, label="q(x, t)")
    plt.ylabel("t")
plt.xlabel("x")
plt.tight_layout()
plt.savefig("field_heatmap.pdf")
plt.show()
