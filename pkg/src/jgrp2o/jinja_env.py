import logging
import os

from jinja2 import Environment, FileSystemLoader, PackageLoader, select_autoescape, Template, TemplateNotFound

package_env = Environment(loader=PackageLoader('jgrp2o'), autoescape=select_autoescape())

log = logging.getLogger(__name__)


class TemplateLocationWrapper:
    """Resolve a report template from a file path first, then from the package templates"""

    def get_template(self, template_name: str) -> Template:
        """Get template

        Args:
            template_name: path to a template file or the name of a packaged template

        Returns:
            Template
        """
        dir_path, file_name = os.path.split(template_name)
        if dir_path:
            try:
                file_system_env = Environment(
                    loader=FileSystemLoader(os.path.abspath(dir_path)), autoescape=select_autoescape()
                )
                return file_system_env.get_template(file_name)
            except TemplateNotFound:
                log.info('There is no template %s on disk. Searching in package location...', template_name)

        try:
            return package_env.get_template(file_name)
        except TemplateNotFound:
            log.error('There is no template %s in the package.', file_name)
            raise


env = TemplateLocationWrapper()
