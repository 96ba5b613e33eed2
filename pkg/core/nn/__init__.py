from core.nn.adam import AdamState, adam_init, adam_step
from core.nn.checkpoint import load_net, save_net
from core.nn.net import (
    Activation,
    FeedForwardNet,
    ForwardTape,
    NetGrads,
    backward_params,
    forward,
    init_net,
    input_jacobian,
    linear_net,
    trace_jacobian_params,
    vjp_input,
)
