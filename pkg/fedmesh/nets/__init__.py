import logging
from typing import Dict, Type

from fedmesh.util.config.definitions.net import ModelKind
from .linear_regression import LinearRegression
from .reference_model import ReferenceModel
from .softmax_classifier import SoftmaxClassifier


def _available_nets() -> Dict[ModelKind, Type[ReferenceModel]]:
    """
    Function to acquire networks provided by the nets package.
    @return: Dictionary containing mapping from `ModelKind` definitions to Typed implementation.
    @rtype: Dict[ModelKind, Type[ReferenceModel]]
    """
    return {
        ModelKind.linear_regression: LinearRegression,
        ModelKind.softmax_classifier: SoftmaxClassifier,
    }


def get_net(name: ModelKind) -> Type[ReferenceModel]:
    """
    Helper function to get specific Net implementation.
    @param name: Network definition to obtain.
    @type name: ModelKind
    @return: Class reference to required Network.
    @rtype: Type[ReferenceModel]
    """
    logging.debug(f"Getting net: {name}")
    return _available_nets()[ModelKind(name)]
