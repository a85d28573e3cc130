class KdvIstError(Exception):
    """
    Base class of every error raised by the engine
    """
    pass


class UnknownPreset(KdvIstError):
    """
    The requested potential preset does not exist
    """
    pass


class InvalidPotential(KdvIstError):
    """
    Samples are not real and finite, or the support leaves [0, b_max]
    """
    pass


class TruncationOutOfRange(KdvIstError):
    """
    Truncation point outside (0, b_max] or off the sampling grid
    """
    pass


class JostStepFailure(KdvIstError):
    """
    The Jost integration produced non-finite values
    """
    pass


class JostOverflow(KdvIstError):
    """
    exp(2 Im k b) would overflow double precision
    """
    pass


class NearSingularTransmission(KdvIstError):
    """
    |W(psi_-, psi_+)| fell below the singularity threshold
    """
    pass


class RootFindingFailure(KdvIstError):
    """
    Bound-state refinement did not converge or roots are nearly degenerate
    """
    pass


class PoleProximity(KdvIstError):
    """
    Evaluation point closer to a pole than the exclusion radius
    """
    pass


class ContourConfigurationError(KdvIstError):
    """
    Contour below a pole, ray cutoff not beyond the rectangle or bad panel counts
    """
    pass


class SymbolEvaluationError(KdvIstError):
    """
    Symbol requested at t <= 0 or at a node collision without principal-value handling
    """
    pass


class NonUniformGrid(KdvIstError):
    """
    FFT based projections need a uniform symmetric grid
    """
    pass


class BasisResolutionError(KdvIstError):
    """
    The half-line basis cannot resolve the symbol oscillation
    """
    pass


class PositivityFailure(KdvIstError):
    """
    Smallest eigenvalue of I + H at or below the positivity floor
    """
    pass


class ImaginaryResidualExceeded(KdvIstError):
    """
    The trace formula produced a significant imaginary part
    """
    pass


class GridReconstructionError(KdvIstError):
    """
    One or more grid points failed; carries the coordinates and causes
    """

    def __init__(self, failures: list[tuple[float, float, str]]):
        self.failures = failures
        points = ', '.join(f'(x={x:g}, t={t:g}): {reason}' for x, t, reason in failures)
        super().__init__(f'{len(failures)} point(s) failed: {points}')


class TailEstimateTooLarge(KdvIstError):
    """
    The momentum grid is too short for the requested integral
    """
    pass


class ValidationFailure(KdvIstError):
    """
    At least one validation check failed
    """
    pass


class PdeStepFailure(KdvIstError):
    """
    The time stepper blew up or the step does not divide the output times
    """
    pass


class BoundaryContamination(KdvIstError):
    """
    Field amplitude at the periodic boundary above the monitor threshold
    """
    pass


class ConfigError(KdvIstError):
    """
    Invalid run configuration or CLI override
    """
    pass
