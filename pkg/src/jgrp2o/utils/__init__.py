from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler  # noqa
