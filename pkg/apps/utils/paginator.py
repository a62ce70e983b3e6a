from django.core.paginator import Paginator, EmptyPage, PageNotAnInteger


class CustomPaginator:
    """Paginates a queryset into the JSON envelope used by the runs API.

    Attributes:
        queryset (QuerySet): Rows to paginate.
        page: Requested page; anything unparsable falls back to the first page.
        per_page (int): Rows per page, capped at ``max_per_page``.
        fields (tuple): Columns passed to ``values()``; empty means every column.
    """

    max_per_page = 100

    def __init__(self, queryset, page=1, per_page: int = 10, fields=()):
        self.queryset = queryset
        self.page = page
        self.per_page = max(1, min(int(per_page), self.max_per_page))
        self.fields = tuple(fields)
        self.paginator = Paginator(self.queryset, self.per_page)

    def get_paginated_response(self):
        """Returns the requested page's rows and the page metadata.

        Returns:
            dict: count, total_pages, current_page, has_next, has_previous, results.
        """
        try:
            page_obj = self.paginator.page(self.page)
        except PageNotAnInteger:
            page_obj = self.paginator.page(1)
        except EmptyPage:
            page_obj = self.paginator.page(self.paginator.num_pages)

        return {
            "count": self.paginator.count,
            "total_pages": self.paginator.num_pages,
            "current_page": page_obj.number,
            "has_next": page_obj.has_next(),
            "has_previous": page_obj.has_previous(),
            "results": list(page_obj.object_list.values(*self.fields)),
        }
