"""Computation/storage trade-off of moving the replay layer.

Replay at an intermediate layer only pays for the partial forward above
that layer, and stores that layer's activation volume instead of the raw
input. The bundled MobileNetV1 (128x128x3) cost table shows the sweep
from input-level rehearsal (100% compute, 49k elements/pattern) down to
the penultimate features (0.027%, 1k elements).
"""
from latentreplay.accounting import (BUNDLED_REPLAY_CANDIDATES, bundled_cost_table,
                                     computation_pct, format_mb, memory_footprint,
                                     pattern_size, tradeoff_csv, tradeoff_table)

table = bundled_cost_table()
print(f"total forward cost: {table.total_ops / 1e6:.2f}M ops, "
      f"{sum(r.weights for r in table.rows) / 1e6:.2f}M weights\n")

rows = tradeoff_table(table, BUNDLED_REPLAY_CANDIDATES, rm_size=1500)
print(tradeoff_csv(rows))

# the storage arithmetic for the classic mid-network choice
elems = pattern_size(table, "conv5_4/dw")
nbytes = memory_footprint(1500, elems, bytes_per_elem=1)
print(f"1500 patterns at conv5_4/dw, 1 byte/element: {nbytes:,} bytes "
      f"= {format_mb(nbytes)}")
print(f"same memory at 4 bytes/element (raw float32): "
      f"{format_mb(memory_footprint(1500, elems, 4))}")
print(f"storage vs native rehearsal: {elems}/{pattern_size(table, 'Images')} "
      f"= {elems / pattern_size(table, 'Images'):.0%}")
print(f"compute vs native rehearsal: "
      f"{computation_pct(table, 'conv5_4/dw'):.1f}%")
