class ExperimentError(RuntimeError):
    """
    Failure of one arm repetition, carrying the arm label and seed that reproduce it.
    """

    def __init__(self, label: str, seed: int, cause: BaseException):
        super().__init__(f'arm {label!r} failed for seed {seed}: {cause}')
        self.label = label
        self.seed = seed
        self.cause = cause
