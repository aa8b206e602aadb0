from .actions import (
    FEATURES,
    N_FEATURES,
    ActionNotInSpace,
    DiscreteActionSpace,
    StateView,
    encode_action,
    featurize,
)
from .base import Policy, PolicyOutput
from .chat import ChatPolicy, ExternalEndpointError, render_messages
from .scripted import DirectDense, EmptyAnswer, GlobalThenZoom, OraclePolicy, RandomGuess
from .toy import ToyPolicy, ToyPolicyParams, logprob_and_grad, logprob_from_features

__all__ = [
    "FEATURES",
    "N_FEATURES",
    "ActionNotInSpace",
    "ChatPolicy",
    "DirectDense",
    "DiscreteActionSpace",
    "EmptyAnswer",
    "ExternalEndpointError",
    "GlobalThenZoom",
    "OraclePolicy",
    "Policy",
    "PolicyOutput",
    "RandomGuess",
    "StateView",
    "ToyPolicy",
    "ToyPolicyParams",
    "encode_action",
    "featurize",
    "logprob_and_grad",
    "logprob_from_features",
    "render_messages",
]
