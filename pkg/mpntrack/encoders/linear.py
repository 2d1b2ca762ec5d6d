import torch
import torch.nn as nn

import logging
from dataclasses import dataclass

logger = logging.getLogger(__name__)

ACTIVATIONS = ('relu', 'sigmoid', 'none')


@dataclass(frozen = True)
class MlpSpec:
    ''' Layer sizes from input to output; hidden layers always use ReLU.  '''
    layer_sizes      : tuple
    final_activation : str = 'relu'

    def __post_init__(self):
        object.__setattr__(self, 'layer_sizes', tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError(f"An MLP needs at least an input and an output size, got {self.layer_sizes}.")
        if min(self.layer_sizes) < 1:
            raise ValueError(f"Layer sizes must be positive, got {self.layer_sizes}.")
        if self.final_activation not in ACTIVATIONS:
            raise ValueError(f"final_activation must be one of {ACTIVATIONS}, got {self.final_activation}.")


    @property
    def dim_in(self):
        return self.layer_sizes[0]


    @property
    def dim_out(self):
        return self.layer_sizes[-1]


    def to_dict(self):
        return { "layer_sizes" : list(self.layer_sizes), "final_activation" : self.final_activation }


    @classmethod
    def from_dict(cls, d):
        return cls(layer_sizes = tuple(d["layer_sizes"]), final_activation = d["final_activation"])




def build_mlp(spec):
    ''' Return an nn.Sequential of FC layers in double precision.

        Layers followed by a ReLU get He-uniform weights, the output layer of
        a sigmoid or linear head gets Xavier-uniform weights.  Biases start at
        zero.
    '''
    layers = []
    num_layers = len(spec.layer_sizes) - 1
    for idx, (dim_in, dim_out) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        fc = nn.Linear( in_features  = dim_in,
                        out_features = dim_out,
                        bias         = True, ).double()

        is_last = idx == num_layers - 1
        act     = spec.final_activation if is_last else 'relu'
        if act == 'relu': nn.init.kaiming_uniform_(fc.weight, nonlinearity = 'relu')
        else            : nn.init.xavier_uniform_(fc.weight)
        nn.init.zeros_(fc.bias)

        layers.append(fc)
        if act == 'relu'   : layers.append(nn.ReLU())
        if act == 'sigmoid': layers.append(nn.Sigmoid())

    return nn.Sequential(*layers)
