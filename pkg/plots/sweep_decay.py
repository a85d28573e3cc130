import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from matplotlib import rcParams

rcParams['figure.figsize'] = [14, 5]
plt.rcParams.update({'font.size': 18})

output_dir = sys.argv[1] if len(sys.argv) > 1 else 'kdvist-output'
truncation = pd.read_csv(f'{output_dir}/sweep/truncation.csv')
basis = pd.read_csv(f'{output_dir}/sweep/basis.csv')

fig, (left, right) = plt.subplots(1, 2)

left.grid(linestyle="--")
left.semilogy(truncation['b'], truncation['abs_diff'], "-o", color="#332288", label="|q_b - q|")
left.semilogy(truncation['b'], truncation['energy'], "-*", color="#882255", label="k-weighted L2 of L - L_b")
left.semilogy(truncation['b'], truncation['energy_bound'], "--", color="#882255", label="tail bound")
# reference slope of an exp(-b) tail
b = np.linspace(truncation['b'].min(), truncation['b'].max(), 50)
left.semilogy(b, truncation['abs_diff'].iloc[0] * np.exp(truncation['b'].iloc[0] - b), ":", color="gray",
              label="exp(-b)")
left.set_xlabel("truncation point b")
left.legend(loc="lower left", fontsize=12)

right.grid(linestyle="--")
converged = basis[basis['abs_diff'] > 0]
right.loglog(converged['basis_size'], converged['abs_diff'], "-^", color="#BD7105")
right.set_xticks(basis['basis_size'], [str(n) for n in basis['basis_size']])
right.set_xlabel("basis size")
right.set_ylabel("|q_N - q_finest|")

plt.tight_layout()
plt.savefig("sweep_decay.pdf")
plt.show()
