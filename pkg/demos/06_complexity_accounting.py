"""Parameter and FLOP accounting for the compact architecture.

Counts follow the fixed conventions: every conv carries batch-norm scale
and shift plus per-channel PReLU slopes; FLOPs are 2 per multiply-
accumulate for conv and linear layers only. The reference constants are
the published design point this architecture targets and the much larger
3-D baseline it replaces.
"""

from fedbeam.evaluation import REFERENCE_RESULTS
from fedbeam.nn import count_flops, count_params, default_architecture

spec = default_architecture()
print("default architecture (20 x 200 input, 256 beam pairs):")
shapes = spec.feature_shapes()
for k, (conv, (c, h, w)) in enumerate(zip(spec.convs, shapes[1:])):
    print(f"  conv{k}: {conv.in_channels}->{conv.out_channels} ch, "
          f"{conv.kernel[0]}x{conv.kernel[1]} stride {conv.stride} -> {c} x {h} x {w}")
print(f"  flatten -> {spec.flat_features} features "
      f"({spec.flat_features / (shapes[0][1] * shapes[0][2]):.1%} of the input pixels)")
print(f"  linear {spec.flat_features}->{spec.hidden} (ReLU), "
      f"linear {spec.hidden}->{spec.n_classes} (softmax)")

params = count_params(spec)
flops = count_flops(spec)
ref = REFERENCE_RESULTS["compact_2d"]
base = REFERENCE_RESULTS["baseline_3d"]
print(f"\nparameters: {params:>9,}   (reference compact design: {ref['params']:,})")
print(f"flops:      {flops:>9,}   (reference compact design: {ref['flops']:,.0f})")
print(f"\nthe 3-D baseline needs {base['params']:,} parameters and {base['flops']:,.0f} flops,")
print(f"so this design is {base['params'] / params:.0f}x smaller and "
      f"{base['flops'] / flops:.0f}x cheaper per forward pass.")
print("\nsmaller |theta| matters twice: every federated round moves |theta|")
print("float32 values per vehicle per direction, so the model size is the")
print("communication bill.")

print("\nscaling the input changes only the conv FLOPs and the first linear:")
for hw in ((20, 100), (20, 200), (40, 400)):
    s = default_architecture(input_shape=hw)
    print(f"  input {hw[0]:3d} x {hw[1]:3d}: {count_params(s):6,} parameters, "
          f"{count_flops(s):9,} flops")
