import torch

# Single-threaded torch keeps every numeric test bit-reproducible.
torch.set_num_threads(1)
