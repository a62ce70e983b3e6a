"""
URL configuration for red_bench project.

Stored benchmark runs are browsable through the admin and the JSON API
under ``runs/``.
"""
from django.contrib import admin
from django.urls import path, include
from django.shortcuts import redirect

urlpatterns = [
    path('admin/', admin.site.urls),
    path('runs/', include('apps.benchmarks.urls')),
    path('', lambda request: redirect('benchmarks:run_list')),
]
