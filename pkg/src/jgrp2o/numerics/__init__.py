from jgrp2o.numerics.params import Parameter, ParamStore  # noqa
from jgrp2o.numerics.gradcheck import grad_check, GradCheckReport, Objective  # noqa
