from fedmesh.util.config.config import ConfigSource, ConfigurationError, get_safe_loader, load_yaml_document
from fedmesh.util.config.federation import DropoutConfig, FederationConfig, ServerAddress, SiteAddress, TrainerSpec
from fedmesh.util.config.layout import FederationLayout, SkewSpec, TaskSpec, load_layout
