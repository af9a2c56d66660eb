"""Walk through the coloring mechanics on a toy 1x6 strip.

Each step writes one bit; after T steps every pixel holds an integer color
and equal-colored connected regions become instances.
"""

import numpy as np

from recolor import ColorState, apply_action, decode_instances

STEPS = 3

state = ColorState.initial(1, 6, STEPS)
print(f"colors start at {state.colors[0].tolist()} (step {state.step})")

# two objects: pixels 0-1 should end at color 1, pixels 4-5 at color 3
plans = np.array([[1, 1, 0, 0, 1, 1],    # bit 0 (worth 1)
                  [0, 0, 0, 0, 1, 1],    # bit 1 (worth 2)
                  [0, 0, 0, 0, 0, 0]])   # bit 2 (worth 4)

for t in range(STEPS):
    state = apply_action(state, plans[t].reshape(1, 6).astype(np.uint8))
    print(f"after step {t}: colors {state.colors[0].tolist()} "
          f"(bit worth {1 << t})")

labels = decode_instances(state)
print(f"decoded instances: {labels[0].tolist()}")
print("pixels with color 0 stay background; equal nonzero colors that touch "
      "become one instance")
